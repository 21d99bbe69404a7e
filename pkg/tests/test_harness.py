import numpy as np
import pytest

from spinmem.analytic import bana_closed_form, pna_closed_form, technical_area
from spinmem.exceptions import ValidationError
from spinmem.harness import (
    SweepPlan,
    analytic_point,
    expected_area_ratio,
    fit_window,
    linear_fit,
    load_plan,
    measure_point,
    power_law_fit,
    reproduce_fig3,
    reproduce_fig4,
    run_sweep,
    segment_length_for,
)
from spinmem.sde import SimConfig


@pytest.mark.parametrize(
    "name, exponent, pna_exponent",
    [("sweep_sx", 3.0, 2.0), ("sweep_jx", 2.0, 1.0), ("sweep_gamma", -1.0, 0.0)],
)
def test_dry_run_exponents(name, exponent, pna_exponent):
    plan = load_plan(name)
    res = run_sweep(SweepPlan(**{**plan.__dict__, "dry_run": True}))
    assert res.exponent == pytest.approx(exponent, abs=1e-9)
    assert res.pna_exponent == pytest.approx(pna_exponent, abs=1e-9)
    assert len(res.points) == len(plan.grid)
    assert "BANA exponent" in res.report()


def test_shipped_plans_validate():
    for name in ("sweep_sx", "sweep_jx", "sweep_gamma"):
        plan = load_plan(name).validate()
        assert plan.n_realizations == 200
        assert SweepPlan.from_dict(plan.to_dict()) == plan


def test_plan_validation(params):
    with pytest.raises(ValidationError):
        SweepPlan(base=params, axis="flux_Sx", grid=(1.0, 2.0, 3.0)).validate()
    with pytest.raises(ValidationError):
        SweepPlan(base=params, axis="flux_Sx", grid=(1.0, 3.0, 2.0, 4.0)).validate()
    with pytest.raises(ValidationError):
        SweepPlan(base=params, axis="eps_z", grid=(1.0, 2.0, 3.0, 4.0)).validate()
    with pytest.raises(ValidationError):
        SweepPlan(base=params, axis="flux_Sx", grid=(-1.0, 2.0, 3.0, 4.0)).validate()
    with pytest.raises(ValidationError):
        SweepPlan.from_dict({"base": params.to_dict(), "axis": "flux_Sx", "grid": [1, 2, 3, 4], "extra": 0})


def test_power_law_fit():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    y = 3.0 * x**2.5
    out = power_law_fit(x, y, 0.01 * y)
    assert out["exponent"] == pytest.approx(2.5, abs=1e-12)
    assert out["prefactor"] == pytest.approx(3.0, rel=1e-12)
    assert out["exponent_err"] > 0


def test_linear_fit_residuals():
    x = np.arange(5.0)
    out = linear_fit(x, 2 * x + 1, np.ones(5))
    assert out["slope"] == pytest.approx(2.0)
    assert out["intercept"] == pytest.approx(1.0)
    assert out["chi2_red"] == pytest.approx(0.0, abs=1e-20)


def test_analytic_point_identities(params):
    p = params.replace(tech_noise_k=1e14)
    a = analytic_point(p).areas
    assert a.bana == pytest.approx(bana_closed_form(p.replace(eps_z=1.0)), rel=1e-12)
    assert a.rsn == pytest.approx(pna_closed_form(p) + technical_area(p), rel=1e-12)


def test_fit_window_capped(params):
    lo, hi = fit_window(params.replace(gamma_Hz=500.0))
    assert lo > 0 and hi < 2 * params.larmor_Hz
    assert fit_window(params) == (1600.0, 3200.0)


def test_segment_length(params):
    cfg = SimConfig(duration_s=2.0, dt_s=1 / 16000, frame="rotating")
    n = segment_length_for(params, cfg)
    assert n & (n - 1) == 0
    assert n * cfg.dt_s >= 20 / params.gamma_Hz


def test_expected_area_ratio_limits(params):
    assert expected_area_ratio(params.replace(eps_z=1.0)) == pytest.approx(1.0)
    strong = params.replace(coupling_a=params.coupling_a * 100)
    assert expected_area_ratio(strong) == pytest.approx(strong.eps_z, rel=1e-3)


def test_fig3_dry_run_shape(params):
    grid = (60.0, 85.0, 120.0, 170.0, 240.0)
    ideal = reproduce_fig3(grid, params, dry_run=True)
    for row in ideal:
        assert row["rsn"] == pytest.approx(row["pna_closed_form"], rel=1e-10)
    bg = [r["bana"] * r["gamma_Hz"] for r in ideal]
    np.testing.assert_allclose(bg, bg[0], rtol=1e-12)
    noisy = reproduce_fig3(grid, params.replace(tech_noise_k=0.5 * params.gamma_ang * params.spin_Jx),
                           dry_run=True)
    ratio = [r["rsn"] / r["pna_closed_form"] for r in noisy]
    assert np.all(np.diff(ratio) <= 0)
    assert ratio[0] > ratio[-1] > 1.0
    with pytest.raises(ValidationError):
        reproduce_fig3((60.0, 85.0, 120.0, 170.0), params, dry_run=True)


def test_fig4_dry_run_collinear(params):
    out = reproduce_fig4((5e11, 7e11, 1e12, 1.4e12), params, dry_run=True)
    assert out["joint_fit"]["slope"] == pytest.approx(out["expected_slope"], rel=1e-9)


def test_measure_point_worker_invariance(params):
    cfg = SimConfig(duration_s=0.5, dt_s=1 / 16000, frame="rotating", burn_in_s=0.05, seed=3)
    a = measure_point(params, cfg, 8, workers=1)
    b = measure_point(params, cfg, 8, workers=3)
    assert a.areas == b.areas
    assert a.fit_sq.params() == b.fit_sq.params()


def test_sweep_deterministic(params):
    cfg = SimConfig(duration_s=0.5, dt_s=1 / 16000, frame="rotating", burn_in_s=0.05, seed=5)
    plan = SweepPlan(base=params, axis="flux_Sx", grid=(1e16, 1.5e16, 2e16, 3e16), sim=cfg, n_realizations=6)
    assert run_sweep(plan).to_dict() == run_sweep(plan).to_dict()


def test_coherent_fit_area_matches_closed_forms(params):
    cfg = SimConfig(duration_s=2.0, dt_s=1 / 16000, frame="rotating", burn_in_s=0.05, seed=31)
    res = measure_point(params, cfg, 100)
    coh = params.replace(eps_y=1.0, eps_z=1.0)
    expected = bana_closed_form(coh) + pna_closed_form(coh)
    assert abs(res.fit_coh.area - expected) < 3 * res.fit_coh.errors["area"]
    assert res.fit_coh.hwhm_Hz == pytest.approx(params.gamma_Hz, rel=0.05)
