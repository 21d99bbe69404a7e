"""End-to-end measurements: coherent/squeezed ensembles, parameter sweeps, figure data.

A *point measurement* simulates a coherent-probe ensemble (``eps_y = eps_z = 1``)
and an anti-squeezed ensemble at the same physical parameters, fits the
Lorentzian in both spectra and decomposes the areas.  Sweeps repeat this over a
grid and regress the back-action area against the swept quantity on log-log
axes.  ``dry_run`` replaces the simulation with the closed-form areas.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic
from .exceptions import InsufficientData, NumericalError, ValidationError
from .params import ExperimentParams, Spectrum, validate
from .sde import SimConfig, check_config, simulate
from .spectral import (
    LorentzianFit,
    NoiseAreas,
    combine_psds,
    decompose,
    fit_lorentzian,
    infer_pna_from_measurement,
    trajectory_psd,
)

AXES = ("flux_Sx", "spin_Jx", "gamma_Hz")

# Realization indices: each (point, probe) pair owns a block of 2**32 streams.
_BLOCK = 1 << 32

DATA_DIR = Path(__file__).with_name("data")


def default_sim_config(seed: int = 0) -> SimConfig:
    """Rotating-frame exact update sampled at 16 kHz, 2 s per realization."""
    return SimConfig(duration_s=2.0, dt_s=1.0 / 16000.0, seed=seed, frame="rotating",
                     initial_spin="thermal", method="exact", burn_in_s=0.05)


def segment_length_for(params: ExperimentParams, config: SimConfig) -> int:
    """Power-of-two Welch segment spanning at least 20/gamma_Hz seconds."""
    n = 20.0 / (params.gamma_Hz * config.dt_s)
    return min(1 << int(math.ceil(math.log2(n))), config.n_steps)


def fit_window(params: ExperimentParams, hwhm_multiple: float = 10.0) -> tuple[float, float]:
    half = min(hwhm_multiple * params.gamma_Hz, 0.9 * params.larmor_Hz)
    return params.larmor_Hz - half, params.larmor_Hz + half


def coherent(params: ExperimentParams) -> ExperimentParams:
    return params.replace(eps_y=1.0, eps_z=1.0)


def _realization_psd(args):
    params, config, index, segment_length = args
    traj = simulate(params, config, index)
    return trajectory_psd(traj.sy_out, traj.dt_s, segment_length)


def measure_spectrum(params: ExperimentParams, config: SimConfig, n_realizations: int,
                     segment_length: int | None = None, workers: int = 1, start: int = 0) -> Spectrum:
    """Averaged output PSD of ``n_realizations`` simulated runs.

    Realizations are independent tasks; the average is taken in index order
    so the result does not depend on ``workers``.
    """
    if n_realizations < 1:
        raise ValidationError(message="n_realizations must be >= 1")
    validate(params, analytic=False)
    check_config(params, config)
    if segment_length is None:
        segment_length = segment_length_for(params, config)
    tasks = [(params, config, start + i, segment_length) for i in range(n_realizations)]
    if workers <= 1:
        results = [_realization_psd(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_realization_psd, tasks))
    freq, _, nseg = results[0]
    spec = combine_psds(freq, [r[1] for r in results], nseg, config.dt_s, segment_length)
    spec.meta["params_digest"] = params.digest()
    return spec


@dataclass
class PointResult:
    """Everything measured at one parameter point."""

    params: ExperimentParams
    areas: NoiseAreas
    fit_coh: LorentzianFit | None = None
    fit_sq: LorentzianFit | None = None
    spec_coh: Spectrum | None = None
    spec_sq: Spectrum | None = None

    def row(self) -> dict:
        out = {"x_" + k: v for k, v in self.params.to_dict().items()}
        out.update(self.areas.to_dict())
        out.pop("convention", None)
        if self.fit_coh is not None:
            out["hwhm_coh_Hz"] = self.fit_coh.hwhm_Hz
            out["hwhm_coh_err"] = self.fit_coh.errors["hwhm_Hz"]
        return out


def analytic_point(params: ExperimentParams) -> PointResult:
    """Closed-form areas standing in for a simulated point (dry run)."""
    p = validate(params)
    base = analytic.bana_closed_form(p.replace(eps_z=1.0))
    rest = analytic.pna_closed_form(p) + analytic.technical_area(p)
    a_coh = base + rest
    a_sq = base * p.eps_z + rest
    areas = decompose(a_coh, a_sq, p.eps_z, snl=p.snl)
    pna = analytic.infer_pna(areas.bana, p.snl, p.gamma_Hz)
    return PointResult(params=p, areas=areas.replace(pna_inferred=pna, pna_inferred_err=0.0))


def measure_point(params: ExperimentParams, config: SimConfig, n_realizations: int, *,
                  eps_z_err: float = 0.0, workers: int = 1, point_index: int = 0,
                  hwhm_multiple: float = 10.0, keep_spectra: bool = False) -> PointResult:
    """Simulate, fit and decompose one coherent/squeezed pair.

    ``params`` carries the squeezed-probe noise factors; the coherent run uses
    the same parameters with ``eps_y = eps_z = 1``.  The shot-noise level and
    decay rate used for projection-noise inference are the fitted floor and
    half-width of the coherent spectrum.
    """
    validate(params)
    window = fit_window(params, hwhm_multiple)
    seg = segment_length_for(params, config)
    fits, specs = [], []
    for probe, p in enumerate((coherent(params), params)):
        spec = measure_spectrum(p, config, n_realizations, seg, workers,
                                start=(2 * point_index + probe) * _BLOCK)
        specs.append(spec)
        fits.append(fit_lorentzian(spec, window, mirror=True, sample_rate_Hz=1.0 / config.dt_s))
    fc, fs = fits
    areas = decompose(fc.area, fs.area, params.eps_z, a_coh_err=fc.errors["area"],
                      a_sq_err=fs.errors["area"], eps_z_err=eps_z_err,
                      snl=fc.floor, snl_err=fc.errors["floor"])
    if areas.bana > 0:
        pna, pna_err = infer_pna_from_measurement(areas, fc.floor, fc.hwhm_Hz,
                                                  fc.errors["floor"], fc.errors["hwhm_Hz"])
        areas = areas.replace(pna_inferred=pna, pna_inferred_err=pna_err)
    return PointResult(params=params, areas=areas, fit_coh=fc, fit_sq=fs,
                       spec_coh=specs[0] if keep_spectra else None,
                       spec_sq=specs[1] if keep_spectra else None)


# --------------------------------------------------------------------------
# Power-law regression


def power_law_fit(x, y, yerr=None) -> dict:
    """Weighted least squares of ``log y = log c + p log x``.

    Weights are ``(y/yerr)^2``; without errors the fit is unweighted.  The
    exponent error is the regression standard error, inflated by
    ``sqrt(chi2_red)`` when the scatter exceeds the quoted errors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValidationError(message="power-law fit needs >= 2 positive points")
    X = np.column_stack([np.ones_like(x), np.log(x)])
    ly = np.log(y)
    if yerr is None or not np.all(np.asarray(yerr) > 0):
        w = np.ones_like(x)
        weighted = False
    else:
        w = (y / np.asarray(yerr, dtype=float)) ** 2
        weighted = True
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    coef = cov @ (XtW @ ly)
    resid = ly - X @ coef
    dof = len(x) - 2
    chi2 = float(np.sum(w * resid**2))
    chi2_red = chi2 / dof if dof > 0 else float("nan")
    if weighted:
        scale = max(1.0, chi2_red) if dof > 0 else 1.0
    else:
        scale = chi2_red if dof > 0 else 0.0
    err = math.sqrt(cov[1, 1] * scale)
    return {
        "exponent": float(coef[1]),
        "exponent_err": err,
        "prefactor": float(math.exp(coef[0])),
        "chi2_red": chi2_red,
    }


def linear_fit(x, y, yerr) -> dict:
    """Weighted straight line ``y = slope x + intercept`` with reduced chi-squared."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 / np.asarray(yerr, dtype=float) ** 2
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    coef = cov @ (XtW @ y)
    resid = y - X @ coef
    dof = len(x) - 2
    chi2 = float(np.sum(w * resid**2))
    return {
        "slope": float(coef[1]),
        "slope_err": math.sqrt(cov[1, 1]),
        "intercept": float(coef[0]),
        "intercept_err": math.sqrt(cov[0, 0]),
        "chi2_red": chi2 / dof if dof > 0 else float("nan"),
        "residuals": (resid * np.sqrt(w)).tolist(),
    }


# --------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepPlan:
    """A grid over one physical parameter, measured with coherent and squeezed probes.

    ``base`` carries the squeezed-probe ``eps_y``/``eps_z``.
    """

    base: ExperimentParams
    axis: str
    grid: tuple[float, ...]
    sim: SimConfig = field(default_factory=default_sim_config)
    n_realizations: int = 200
    eps_z_err: float = 0.0
    dry_run: bool = False
    hwhm_multiple: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))

    def point_params(self) -> list[ExperimentParams]:
        return [self.base.replace(**{self.axis: v}) for v in self.grid]

    def validate(self) -> "SweepPlan":
        errors = []
        if self.axis not in AXES:
            errors.append(ValidationError(message=f"axis must be one of {AXES}"))
        g = np.asarray(self.grid)
        if len(g) < 4:
            errors.append(ValidationError(message="grid needs at least 4 points"))
        if np.any(np.diff(g) <= 0):
            errors.append(ValidationError(message="grid must be strictly increasing"))
        if self.n_realizations < 1:
            errors.append(ValidationError(message="n_realizations must be >= 1"))
        if not errors:
            for p in self.point_params():
                try:
                    validate(p)
                    if not self.dry_run:
                        check_config(p, self.sim)
                except ValidationError as exc:
                    errors.extend(exc.errors)
        if len(errors) == 1:
            raise errors[0]
        if errors:
            raise ValidationError(errors)
        return self

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "axis": self.axis,
            "grid": list(self.grid),
            "sim": self.sim.to_dict(),
            "n_realizations": self.n_realizations,
            "eps_z_err": self.eps_z_err,
            "dry_run": self.dry_run,
            "hwhm_multiple": self.hwhm_multiple,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ValidationError(message=f"unknown SweepPlan key(s): {', '.join(unknown)}")
        d = dict(d)
        d["base"] = ExperimentParams.from_dict(d["base"])
        if "sim" in d:
            d["sim"] = SimConfig.from_dict(d["sim"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SweepPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ScalingResult:
    """Log-log exponent of the back-action area (and inferred projection area) along a sweep."""

    axis: str
    exponent: float
    exponent_err: float
    prefactor: float
    chi2_red: float
    pna_exponent: float
    pna_exponent_err: float
    points: list[dict]
    failed: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def report(self) -> str:
        lines = [
            f"axis: {self.axis}",
            f"BANA exponent: {self.exponent:.3f} +/- {self.exponent_err:.3f} (chi2_red {self.chi2_red:.2f})",
            f"PNA exponent: {self.pna_exponent:.3f} +/- {self.pna_exponent_err:.3f}",
            f"points: {len(self.points)} ok, {len(self.failed)} failed",
        ]
        return "\n".join(lines)


def run_sweep(plan: SweepPlan, workers: int = 1) -> ScalingResult:
    """Measure every grid point and regress BANA (and inferred PNA) against the axis.

    Points that fail numerically are reported in ``failed``; at least four
    successful points are required.
    """
    plan.validate()
    points, failed, xs = [], [], []
    for k, p in enumerate(plan.point_params()):
        try:
            if plan.dry_run:
                res = analytic_point(p)
            else:
                res = measure_point(p, plan.sim, plan.n_realizations, eps_z_err=plan.eps_z_err,
                                    workers=workers, point_index=k, hwhm_multiple=plan.hwhm_multiple)
            if not res.areas.bana > 0:
                raise NumericalError("non-positive back-action area")
        except NumericalError as exc:
            failed.append({"x": plan.grid[k], "error": str(exc)})
            continue
        row = res.row()
        row["x"] = plan.grid[k]
        points.append(row)
        xs.append(plan.grid[k])
    if len(points) < 4:
        raise InsufficientData(f"only {len(points)} grid points succeeded; need 4")

    def errs(key):
        return None if plan.dry_run else [r[key] for r in points]

    bana = power_law_fit(xs, [r["bana"] for r in points], errs("bana_err"))
    pna = power_law_fit(xs, [r["pna_inferred"] for r in points], errs("pna_inferred_err"))
    return ScalingResult(
        axis=plan.axis,
        exponent=bana["exponent"],
        exponent_err=bana["exponent_err"],
        prefactor=bana["prefactor"],
        chi2_red=bana["chi2_red"],
        pna_exponent=pna["exponent"],
        pna_exponent_err=pna["exponent_err"],
        points=points,
        failed=failed,
    )


# --------------------------------------------------------------------------
# Figure reproductions


def _sigma_ratio(a, ea, b, eb):
    r = a / b
    return r, abs(r) * math.hypot(ea / a, eb / b)


def expected_area_ratio(params: ExperimentParams) -> float:
    """Squeezed-to-coherent atomic area ratio predicted by the output spectrum."""
    p = params
    ba = p.coupling_a**2 * p.spin_Jx**2 * p.flux_Sx / 2.0
    rest = 2.0 * p.gamma_ang * p.spin_Jx + 2.0 * p.tech_noise_k
    return (ba * p.eps_z + rest) / (ba + rest)


def reproduce_fig2(params: ExperimentParams, config: SimConfig | None = None,
                   n_realizations: int = 100, workers: int = 1) -> dict:
    """Coherent and squeezed spectra with checkable annotations.

    The wing ratio is the ratio of fitted floors (expected ``eps_y``) and the
    area ratio is compared with :func:`expected_area_ratio`.
    """
    if not params.eps_y < 1.0 < params.eps_z:
        raise ValidationError(message="squeezed case needs eps_y < 1 < eps_z")
    config = config or default_sim_config()
    res = measure_point(params, config, n_realizations, workers=workers, keep_spectra=True)
    fc, fs = res.fit_coh, res.fit_sq
    wing, wing_err = _sigma_ratio(fs.floor, fs.errors["floor"], fc.floor, fc.errors["floor"])
    area, area_err = _sigma_ratio(fs.area, fs.errors["area"], fc.area, fc.errors["area"])
    expected = expected_area_ratio(params)
    return {
        "coherent": res.spec_coh,
        "squeezed": res.spec_sq,
        "fit_coherent": fc,
        "fit_squeezed": fs,
        "annotations": {
            "wing_ratio": wing,
            "wing_ratio_err": wing_err,
            "wing_ratio_expected": params.eps_y,
            "wing_ratio_ok": abs(wing - params.eps_y) <= 3 * wing_err,
            "area_ratio": area,
            "area_ratio_err": area_err,
            "area_ratio_expected": expected,
            "area_ratio_ok": abs(area - expected) <= 3 * area_err,
        },
    }


def reproduce_fig3(gamma_grid, params: ExperimentParams, config: SimConfig | None = None,
                   n_realizations: int = 100, workers: int = 1, dry_run: bool = False) -> list[dict]:
    """Table of (gamma, BANA, RSN, inferred PNA) against the decay rate.

    With technical noise the RSN exceeds the projection noise at small gamma
    and approaches it as gamma grows.
    """
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.max() / grid.min() < 4.0:
        raise ValidationError(message="gamma grid must span at least a factor of 4")
    config = config or default_sim_config()
    rows = []
    for k, g in enumerate(grid):
        p = params.replace(gamma_Hz=float(g))
        res = analytic_point(p) if dry_run else measure_point(p, config, n_realizations,
                                                              workers=workers, point_index=k)
        a = res.areas
        rows.append({
            "gamma_Hz": float(g),
            "bana": a.bana, "bana_err": a.bana_err,
            "rsn": a.rsn, "rsn_err": a.rsn_err,
            "pna_inferred": a.pna_inferred, "pna_inferred_err": a.pna_inferred_err,
            "pna_closed_form": analytic.pna_closed_form(p),
            "bana_closed_form": analytic.bana_closed_form(p.replace(eps_z=1.0)),
            "rsn_closed_form": analytic.pna_closed_form(p) + analytic.technical_area(p),
        })
    return rows


FIG4_GAMMAS_HZ = (132.0, 242.5)  # full widths 264 Hz and 485 Hz


def reproduce_fig4(jx_grid, params: ExperimentParams, gammas_Hz=FIG4_GAMMAS_HZ,
                   config: SimConfig | None = None, n_realizations: int = 100,
                   workers: int = 1, dry_run: bool = False) -> dict:
    """Inferred projection noise area against J_x for two decay rates, with a joint line fit."""
    config = config or default_sim_config()
    series = {}
    xs, ys, es = [], [], []
    for s, g in enumerate(gammas_Hz):
        plan = SweepPlan(base=params.replace(gamma_Hz=float(g)), axis="spin_Jx", grid=tuple(jx_grid),
                         sim=config.replace(seed=config.seed + s), n_realizations=n_realizations,
                         dry_run=dry_run)
        result = run_sweep(plan, workers=workers)
        series[float(g)] = result
        for r in result.points:
            xs.append(r["x"])
            ys.append(r["pna_inferred"])
            es.append(r["pna_inferred_err"] if not dry_run else max(abs(r["pna_inferred"]) * 1e-9, 1e-300))
    joint = linear_fit(xs, ys, es)
    return {"series": series, "joint_fit": joint,
            "expected_slope": params.coupling_a**2 * (params.flux_Sx / 2) ** 2}


def load_plan(name: str) -> SweepPlan:
    """One of the shipped sweep plans: ``sweep_sx``, ``sweep_jx`` or ``sweep_gamma``."""
    return SweepPlan.load(DATA_DIR / f"{name}.json")
