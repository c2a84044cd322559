import math

import pytest

from kgmode import plots


def _write_bundle(d):
    d.mkdir(parents=True, exist_ok=True)
    t = [0.5 * i for i in range(200)]
    (d / "decay.csv").write_text(
        "t,abs_A,abs_B,inv_abs_A2,inv_abs_B2\n"
        + "".join(f"{x},{(25 + 0.1 * x) ** -0.5},{(25 + 0.1 * x) ** -0.5},{25 + 0.1 * x},{25 + 0.1 * x}\n" for x in t)
    )
    (d / "resonant.csv").write_text(
        "t,ell,abs_fstar,abs_model\n"
        + "".join(f"{x},{math.log1p(x)},{abs(math.sin(math.log1p(x)))},{abs(math.sin(math.log1p(x)))}\n" for x in t)
    )
    (d / "growth.csv").write_text(
        "t,dk_norm_f,dk_norm_h\n" + "".join(f"{x},{0.02 * x},{0.1}\n" for x in t[1:])
    )
    (d / "scattering.csv").write_text(
        "j,t,d_corrected,d_good,d_raw\n" + "".join(f"{j},{2**j},{0.1 / 2**j},{0.1 / 2**j},{0.1}\n" for j in range(5))
    )
    (d / "g_bound.csv").write_text("t,sup_g\n" + "".join(f"{x},{min(x, 1.0)}\n" for x in t))
    (d / "report.txt").write_text(
        "decay.slope=0.1\ndecay.intercept=25\ndecay.gamma_fit=0.08\n"
        "resonant.c2=-0.8\nresonant.psi_inf=0\nresonant.y0=1\n"
        "growth.exponent=1\ngrowth.prefactor=0.02\ng.ref_t=5\ng.ref=1\n"
    )


def test_empty_bundle_is_rejected_without_output(tmp_path):
    (tmp_path / "report").mkdir()
    with pytest.raises(plots.MissingBundle):
        plots.render_all(tmp_path / "report", tmp_path / "figs")
    assert not (tmp_path / "figs").exists()


def test_missing_overlay_key(tmp_path):
    _write_bundle(tmp_path / "report")
    (tmp_path / "report" / "report.txt").write_text("decay.slope=0.1\n")
    with pytest.raises(plots.MissingBundle):
        plots.figure_specs(tmp_path / "report")


def test_specs_carry_report_parameters(tmp_path):
    _write_bundle(tmp_path / "report")
    specs = {s.figure_id: s for s in plots.figure_specs(tmp_path / "report")}
    assert set(specs) == {"decay", "resonant", "growth", "scattering", "g_bound"}
    assert specs["decay"].overlay["slope"] == 0.1
    assert specs["growth"].xscale == "log" and specs["growth"].yscale == "log"


def test_render_is_deterministic(tmp_path):
    pytest.importorskip("matplotlib")
    _write_bundle(tmp_path / "report")
    first = plots.render_all(tmp_path / "report", tmp_path / "a")
    second = plots.render_all(tmp_path / "report", tmp_path / "b")
    assert len(first) == 5
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
