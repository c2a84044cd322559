"""Radial Klein-Gordon lab with one internal mode (compiled core)."""

from ._core import (
    GenericityReport,
    KgmodeError,
    ResonanceData,
    RunConfig,
    SpectralData,
    TraceStore,
    __version__,
    bilinear_scaling_probe,
    build_spectrum,
    compute_kstar,
    compute_resonance,
    fit_decay,
    mollified_gamma_extrapolated,
    pv_quadrature,
    resonant_fit,
    run_cli,
    simulate,
)

__all__ = [
    "GenericityReport",
    "KgmodeError",
    "ResonanceData",
    "RunConfig",
    "SpectralData",
    "TraceStore",
    "__version__",
    "bilinear_scaling_probe",
    "build_spectrum",
    "compute_kstar",
    "compute_resonance",
    "fit_decay",
    "mollified_gamma_extrapolated",
    "pv_quadrature",
    "resonant_fit",
    "run_cli",
    "simulate",
]
