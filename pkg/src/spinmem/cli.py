"""Command line entry point: ``spinmem <subcommand> [options]``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on a numerical
failure (fit did not converge, no peak, too few sweep points).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analytic, harness
from . import io as sio
from .exceptions import NumericalError, SpinmemWarning, ValidationError
from .params import ExperimentParams, default_params
from .sde import SimConfig, simulate
from .spectral import decompose, fit_lorentzian, infer_pna_from_measurement

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config and SPINMEM_SEED)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="spinmem", description="Quantum-memory spin-noise simulator and analysis")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum", parents=[common], help="analytic output spectrum on a grid")
    p.add_argument("--fmin", type=float)
    p.add_argument("--fmax", type=float)
    p.add_argument("--points", type=int, default=401)

    p = sub.add_parser("simulate", parents=[common], help="simulate one ensemble")
    p.add_argument("--realizations", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--save-trajectories", type=int, default=1)

    p = sub.add_parser("fit", parents=[common], help="fit a Lorentzian to a spectrum file")
    p.add_argument("spectrum", type=Path)
    p.add_argument("--window", type=float, nargs=2, metavar=("F_LO", "F_HI"))
    p.add_argument("--mirror", action="store_true",
                   help="include the image peak at -center (two-sided spectra of real signals)")
    p.add_argument("--sample-rate", type=float, metavar="HZ",
                   help="fold in the peak aliases for unfiltered sampled data at this rate")

    p = sub.add_parser("decompose", parents=[common], help="BANA/RSN from coherent and squeezed fits")
    p.add_argument("--coh", type=Path, required=True)
    p.add_argument("--sq", type=Path, required=True)
    p.add_argument("--eps-z", type=float, required=True)
    p.add_argument("--eps-z-err", type=float, default=0.0)

    p = sub.add_parser("sweep", parents=[common], help="run a sweep plan")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--realizations", type=int)

    figures = {
        "fig2": "coherent vs squeezed probe spectra",
        "fig3": "back-action and residual noise vs decay rate",
        "fig4": "inferred projection noise vs J_x at two decay rates",
    }
    for name, text in figures.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--realizations", type=int, default=100)
        p.add_argument("--duration", type=float)
        if name != "fig2":
            p.add_argument("--dry-run", action="store_true")
    return parser


# --------------------------------------------------------------------------
# config helpers


def _read_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(message=f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(message=f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError(message=f"{path}: expected a JSON object")
    return data


def _params_from(cfg: dict, base: Path | None) -> ExperimentParams:
    """A flat params object, or the ``params`` entry (inline or a path)."""
    if "coupling_a" in cfg:
        return ExperimentParams.from_dict(cfg)
    p = cfg.get("params")
    if p is None:
        return default_params()
    if isinstance(p, str):
        ref = Path(p)
        if base is not None and not ref.is_absolute():
            ref = base.parent / ref
        return ExperimentParams.from_dict(_read_config(ref))
    return ExperimentParams.from_dict(p)


def _seed(args, fallback: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SPINMEM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(message=f"SPINMEM_SEED is not an integer: {env!r}") from exc
    return fallback


def _sim_from(cfg: dict, args) -> SimConfig:
    sim = SimConfig.from_dict(cfg["sim"]) if "sim" in cfg else harness.default_sim_config()
    if getattr(args, "duration", None):
        sim = sim.replace(duration_s=args.duration)
    return sim.replace(seed=_seed(args, sim.seed))


# one run-config file may serve every subcommand
RUN_KEYS = {"params", "grid", "sim", "n_realizations", "segment_length", "save_trajectories", "gamma_grid"}


def _only_keys(cfg: dict, allowed: set, what: str):
    if "coupling_a" in cfg:
        return
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValidationError(message=f"unknown {what} config key(s): {', '.join(unknown)}")


# --------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args) -> None:
    cfg = _read_config(args.config)
    _only_keys(cfg, RUN_KEYS, "spectrum")
    params = _params_from(cfg, args.config)
    grid = cfg.get("grid", {})
    half = 10.0 * params.gamma_Hz
    fmin = args.fmin if args.fmin is not None else grid.get("f_min", params.larmor_Hz - half)
    fmax = args.fmax if args.fmax is not None else grid.get("f_max", params.larmor_Hz + half)
    n = int(grid.get("n", args.points))
    f = np.linspace(fmin, fmax, n)
    terms = analytic.spectrum_terms(params, f)
    phi = analytic.spectrum_phi(params, f)
    rows = [{"freq_Hz": fi, "psd": pi, **{k: float(v[i]) for k, v in terms.items()}}
            for i, (fi, pi) in enumerate(zip(f.tolist(), np.atleast_1d(phi).tolist()))]
    if args.format == "csv":
        sio.write_atomic(args.out / "spectrum.csv", sio.table_csv(rows, params.digest()))
    else:
        sio.write_json(args.out / "spectrum.json", {
            "convention": analytic.CONVENTION_TAG, "params": params.to_dict(),
            "params_digest": params.digest(), "rows": rows,
            "bana": analytic.bana_closed_form(params), "pna": analytic.pna_closed_form(params),
            "technical_area": analytic.technical_area(params),
        })


def cmd_simulate(args) -> None:
    cfg = _read_config(args.config)
    _only_keys(cfg, RUN_KEYS, "simulate")
    params = _params_from(cfg, args.config)
    sim = _sim_from(cfg, args)
    n = args.realizations or int(cfg.get("n_realizations", 1))
    seg = int(cfg.get("segment_length", harness.segment_length_for(params, sim)))
    spec = harness.measure_spectrum(params, sim, n, seg, workers=args.threads)
    ext = args.format
    sio.save_spectrum(args.out / f"psd.{ext}", spec, ext)
    keep = min(int(cfg.get("save_trajectories", args.save_trajectories)), n)
    for i in range(keep):
        traj = simulate(params, sim, i)
        sio.save_trajectory(args.out / f"trajectory_{i:04d}.bin", traj)
        if ext == "csv":
            sio.write_atomic(args.out / f"trajectory_{i:04d}.csv", sio.trajectory_csv(traj))
    sio.write_json(args.out / "run.json", {
        "params": params.to_dict(), "params_digest": params.digest(), "sim": sim.to_dict(),
        "n_realizations": n, "segment_length": seg,
    })


def cmd_fit(args) -> None:
    cfg = _read_config(args.config)
    spec = sio.load_spectrum(args.spectrum)
    if args.window:
        window = tuple(args.window)
    elif cfg:
        window = harness.fit_window(_params_from(cfg, args.config))
    else:
        raise ValidationError(message="fit needs --window or --config with the parameters")
    fit = fit_lorentzian(spec, window, mirror=args.mirror, sample_rate_Hz=args.sample_rate)
    sio.save_fit(args.out / "fit.json", fit)
    if args.format == "csv":
        row = {"floor": fit.floor, "center_Hz": fit.center_Hz, "hwhm_Hz": fit.hwhm_Hz, "area": fit.area}
        row.update({k + "_err": v for k, v in fit.errors.items()})
        row.update({"chi2_red": fit.chi2_red, "direct_area": fit.direct_area})
        sio.write_atomic(args.out / "fit.csv", sio.table_csv([row]))


def cmd_decompose(args) -> None:
    coh, sq = sio.load_fit(args.coh), sio.load_fit(args.sq)
    areas = decompose(coh.area, sq.area, args.eps_z, a_coh_err=coh.errors["area"],
                      a_sq_err=sq.errors["area"], eps_z_err=args.eps_z_err,
                      snl=coh.floor, snl_err=coh.errors["floor"])
    if areas.bana > 0:
        pna, err = infer_pna_from_measurement(areas, coh.floor, coh.hwhm_Hz,
                                              coh.errors["floor"], coh.errors["hwhm_Hz"])
        areas = areas.replace(pna_inferred=pna, pna_inferred_err=err)
    sio.write_json(args.out / "noise_areas.json", areas.to_dict())
    if args.format == "csv":
        sio.write_atomic(args.out / "noise_areas.csv", sio.noise_areas_csv(areas))


def cmd_sweep(args) -> None:
    if args.config is None:
        raise ValidationError(message="sweep needs --config <plan.json>")
    plan = harness.SweepPlan.from_dict(_read_config(args.config))
    changes = {"sim": plan.sim.replace(seed=_seed(args, plan.sim.seed))}
    if args.dry_run:
        changes["dry_run"] = True
    if args.realizations:
        changes["n_realizations"] = args.realizations
    plan = dataclasses.replace(plan, **changes)
    result = harness.run_sweep(plan, workers=args.threads)
    sio.write_json(args.out / "scaling.json", {"plan": plan.to_dict(), "result": result.to_dict()})
    sio.write_atomic(args.out / "points.csv", sio.table_csv(result.points, plan.base.digest()))
    xs = [r["x"] for r in result.points]
    sio.write_atomic(args.out / "bana_vs_x.dat", sio.plot_data(
        xs, [r["bana"] for r in result.points], [r["bana_err"] for r in result.points],
        header=f"{plan.axis} BANA BANA_err"))
    print(result.report())


def cmd_fig2(args) -> None:
    cfg = _read_config(args.config)
    params = _params_from(cfg, args.config)
    sim = _sim_from(cfg, args)
    out = harness.reproduce_fig2(params, sim, args.realizations, workers=args.threads)
    for key in ("coherent", "squeezed"):
        sio.save_spectrum(args.out / f"fig2_{key}.{args.format}", out[key], args.format)
    sio.write_json(args.out / "fig2_annotations.json", {
        "annotations": out["annotations"],
        "fit_coherent": out["fit_coherent"].to_dict(),
        "fit_squeezed": out["fit_squeezed"].to_dict(),
    })
    a = out["annotations"]
    print(f"wing ratio {a['wing_ratio']:.4f} +/- {a['wing_ratio_err']:.4f} (expected {a['wing_ratio_expected']})")
    print(f"area ratio {a['area_ratio']:.3f} +/- {a['area_ratio_err']:.3f} "
          f"(expected {a['area_ratio_expected']:.3f})")


FIG3_GAMMAS_HZ = (60.0, 85.0, 120.0, 170.0, 240.0)
FIG4_JX = (5e11, 7e11, 1e12, 1.4e12, 2e12)


def cmd_fig3(args) -> None:
    cfg = _read_config(args.config)
    params = _params_from(cfg, args.config)
    if params.tech_noise_k == 0:
        # technical noise at half the quantum Langevin strength of the base point
        params = params.replace(tech_noise_k=0.5 * params.gamma_ang * params.spin_Jx)
    grid = cfg.get("gamma_grid", FIG3_GAMMAS_HZ) if "coupling_a" not in cfg else FIG3_GAMMAS_HZ
    rows = harness.reproduce_fig3(grid, params, _sim_from(cfg, args), args.realizations,
                                  workers=args.threads, dry_run=args.dry_run)
    _write_table(args, "fig3", rows, params)
    g = [r["gamma_Hz"] for r in rows]
    for key in ("bana", "rsn", "pna_inferred"):
        sio.write_atomic(args.out / f"fig3_{key}.dat", sio.plot_data(
            g, [r[key] for r in rows], [r[key + "_err"] for r in rows], header=f"gamma_Hz {key} err"))


def cmd_fig4(args) -> None:
    cfg = _read_config(args.config)
    params = _params_from(cfg, args.config)
    out = harness.reproduce_fig4(FIG4_JX, params, config=_sim_from(cfg, args),
                                 n_realizations=args.realizations, workers=args.threads,
                                 dry_run=args.dry_run)
    rows = []
    for g, res in out["series"].items():
        for r in res.points:
            rows.append({"gamma_Hz": g, "spin_Jx": r["x"], "pna_inferred": r["pna_inferred"],
                         "pna_inferred_err": r["pna_inferred_err"], "bana": r["bana"],
                         "bana_err": r["bana_err"]})
        sub = [r for r in rows if r["gamma_Hz"] == g]
        sio.write_atomic(args.out / f"fig4_gamma{g:g}.dat", sio.plot_data(
            [r["spin_Jx"] for r in sub], [r["pna_inferred"] for r in sub],
            [r["pna_inferred_err"] for r in sub], header="spin_Jx pna_inferred err"))
    _write_table(args, "fig4", rows, params)
    joint = dict(out["joint_fit"])
    joint["expected_slope"] = out["expected_slope"]
    sio.write_json(args.out / "fig4_fit.json", joint)
    print(f"joint line: reduced chi2 {joint['chi2_red']:.2f}, slope {joint['slope']:.4g} "
          f"(expected {joint['expected_slope']:.4g})")


def _write_table(args, name, rows, params):
    if args.format == "csv":
        sio.write_atomic(args.out / f"{name}.csv", sio.table_csv(rows, params.digest()))
    else:
        sio.write_json(args.out / f"{name}.json", {"params": params.to_dict(), "rows": rows})


COMMANDS = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "fig4": cmd_fig4,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.threads < 1:
        print("spinmem: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SpinmemWarning)
            COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"spinmem {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"spinmem {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, KeyError, TypeError) as exc:
        print(f"spinmem {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
