"""Figures from a `kgmode report` bundle.

Overlays use the parameters stored in report.txt; nothing is refitted here.
matplotlib is imported only when rendering.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

BUNDLE_FILES = ("decay.csv", "resonant.csv", "growth.csv", "scattering.csv", "g_bound.csv")


class MissingBundle(Exception):
    """The report directory lacks report.txt or one of the CSV tables."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: tuple[Path, ...]
    xscale: str = "linear"
    yscale: str = "linear"
    overlay: dict[str, float] = field(default_factory=dict)


def read_report(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out


def read_table(path: Path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MissingBundle(f"{path} is empty")
    cols: dict[str, list[float]] = {name: [] for name in rows[0]}
    for row in rows[1:]:
        for name, cell in zip(rows[0], row):
            cols[name].append(float(cell))
    return cols


def _check_bundle(report_dir: Path) -> dict[str, str]:
    missing = [n for n in (*BUNDLE_FILES, "report.txt") if not (report_dir / n).is_file()]
    if missing:
        raise MissingBundle(f"{report_dir}: missing {', '.join(missing)}")
    return read_report(report_dir / "report.txt")


def _params(report: dict[str, str], prefix: str, names: tuple[str, ...]) -> dict[str, float]:
    try:
        return {n: float(report[f"{prefix}.{n}"]) for n in names}
    except KeyError as e:
        raise MissingBundle(f"report.txt lacks {e.args[0]}") from None


def figure_specs(report_dir: str | Path) -> list[FigureSpec]:
    d = Path(report_dir)
    rep = _check_bundle(d)
    return [
        FigureSpec("decay", (d / "decay.csv",), overlay=_params(rep, "decay", ("slope", "intercept", "gamma_fit"))),
        FigureSpec("resonant", (d / "resonant.csv",), overlay=_params(rep, "resonant", ("c2", "psi_inf", "y0"))),
        FigureSpec("growth", (d / "growth.csv",), "log", "log",
                   overlay=_params(rep, "growth", ("exponent", "prefactor"))),
        FigureSpec("scattering", (d / "scattering.csv",), yscale="log"),
        FigureSpec("g_bound", (d / "g_bound.csv",), overlay=_params(rep, "g", ("ref_t", "ref"))),
    ]


def _draw(ax, spec: FigureSpec) -> None:
    tab = read_table(spec.inputs[0])
    o = spec.overlay
    if spec.figure_id == "decay":
        t = tab["t"]
        ax.plot(t, tab["inv_abs_B2"], lw=0.8, label="$|B|^{-2}$")
        ax.plot(t, [o["slope"] * x + o["intercept"] for x in t], "k--", lw=0.8,
                label=f"fit, $\\Gamma$ = {o['gamma_fit']:.4g}")
        ax.set_xlabel("t")
    elif spec.figure_id == "resonant":
        ax.plot(tab["ell"], tab["abs_fstar"], lw=0.8, label="$|\\tilde f(t,k_*)|$")
        ax.plot(tab["ell"], tab["abs_model"], "k--", lw=0.8, label=f"envelope, $Y_0$ = {o['y0']:.3g}")
        ax.set_xlabel("$\\ell(t)$")
    elif spec.figure_id == "growth":
        t = tab["t"]
        ax.plot(t, tab["dk_norm_f"], "o", ms=3, label="$\\|\\partial_k f\\|$")
        ax.plot(t, [o["prefactor"] * x ** o["exponent"] for x in t], "k--", lw=0.8,
                label=f"slope {o['exponent']:.3f}")
        ax.set_xlabel("t")
    elif spec.figure_id == "scattering":
        for col in ("d_raw", "d_good", "d_corrected"):
            ax.plot(tab["j"], tab[col], "o-", ms=3, lw=0.8, label=col)
        ax.set_xlabel("dyadic index j")
    else:
        ax.plot(tab["t"], tab["sup_g"], lw=0.8, label="$\\sup_k |g|$")
        ax.axhline(o["ref"], color="k", ls="--", lw=0.8, label=f"value at t = {o['ref_t']:.3g}")
        ax.set_xlabel("t")
    ax.set_xscale(spec.xscale)
    ax.set_yscale(spec.yscale)
    ax.legend(fontsize=8)


def render_all(report_dir: str | Path, out_dir: str | Path, fmt: str = "svg") -> list[Path]:
    """Writes one figure per spec; returns the paths in spec order."""
    specs = figure_specs(report_dir)  # validates before anything is written
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with matplotlib.rc_context({"svg.hashsalt": "kgmode", "font.family": "DejaVu Sans"}):
        for spec in specs:
            fig, ax = plt.subplots(figsize=(5.0, 3.5))
            _draw(ax, spec)
            fig.tight_layout()
            path = out / f"{spec.figure_id}.{fmt}"
            meta = {"Date": None} if fmt == "svg" else {}
            fig.savefig(path, format=fmt, metadata=meta)
            plt.close(fig)
            written.append(path)
    return written
