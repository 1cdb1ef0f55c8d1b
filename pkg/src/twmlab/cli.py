"""Command-line front end.

    twmlab quantum   --preset fig4a --out runs/fig4a
    twmlab classical --preset tanh2
    twmlab ensemble  --preset fig9 --seed 3 --workers 4
    twmlab sweep     --preset table1
    twmlab netr 6 4

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import classical as cl
from .analysis import (
    IN_NETR,
    NoMinimumError,
    SweepSpec,
    fit_inverse_polynomial,
    fit_power_law,
    sweep_minima,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_override,
    load_file,
    load_preset,
    preset_names,
)
from .ensemble import NoiseModel, netr_analytic, netr_fano_ratio, plateau, run_ensemble
from .io import write_json, write_table
from .quantum import (
    BudgetError,
    DEGENERATE,
    NONDEGENERATE,
    CutoffError,
    coherent_state,
    default_q_grid,
    evolve,
    husimi_marginal,
    observable_series,
)

# power-law residual this many times the polynomial residual is flagged
POWER_LAW_FLAG_RATIO = 3.0


class UsageError(ValueError):
    pass


def _versions() -> dict:
    return {"twmlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _manifest(cfg: ExperimentConfig, command: str, outputs: list[Path], **extra) -> dict:
    return {
        "command": command,
        "config": cfg.as_dict(),
        "sources": list(cfg.sources),
        "versions": _versions(),
        "outputs": sorted(p.name for p in outputs),
        **extra,
    }


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tag(t: float) -> str:
    return format(t, "g").replace(".", "p").replace("-", "m")


def _conservation_drift(series) -> dict:
    """Relative spread of the conserved photon-number combinations."""
    m = series.mean_n
    if series.model.tag == NONDEGENERATE:
        combos = {"n1+n3": m[0] + m[2], "n2+n3": m[1] + m[2]}
    else:
        combos = {"n1+2n3": m[0] + 2 * m[1]}
    out = {}
    for name, v in combos.items():
        scale = max(abs(v[0]), 1e-300)
        out[name] = float(np.abs(v - v[0]).max() / scale)
    return out


def cmd_quantum(cfg: ExperimentConfig) -> int:
    model = cfg.model_kind()
    amps = cfg.amplitudes()
    times = cfg.time_grid()
    out = _out_dir(cfg)
    series = observable_series(model, amps, times, cfg.quantum.eps_trunc, cfg.quantum.max_dim,
                               workers=cfg.run.workers)
    cols = {"gt": times}
    for i, k in enumerate(series.modes):
        cols[f"mean_n{k}"] = series.mean_n[i]
    for i, k in enumerate(series.modes):
        cols[f"var_n{k}"] = series.var_n[i]
    for i, k in enumerate(series.modes):
        cols[f"fano{k}"] = series.fano[i]
    cols["norm"] = series.norm
    outputs = [write_table(out / "series", cols, cfg.run.format)]

    if cfg.quantum.snapshots:
        state0 = coherent_state(model, amps, cfg.quantum.eps_trunc, cfg.quantum.max_dim)
        radius = max(abs(a) for a in amps) + 4.0
        re_axis, im_axis = default_q_grid(radius, cfg.quantum.q_points)
        for t in cfg.quantum.snapshots:
            state = evolve(state0, t)
            for k in model.modes:
                q = husimi_marginal(state, k, re_axis, im_axis)
                re, im = np.meshgrid(re_axis, im_axis)
                outputs.append(write_table(out / f"q_t{_tag(t)}_mode{k}",
                                           {"re": re.ravel(), "im": im.ravel(), "Q": q.ravel()},
                                           cfg.run.format))
    manifest = _manifest(cfg, "quantum", outputs,
                         truncation_weight=series.truncation_weight,
                         basis_states=series.meta["basis_states"],
                         blocks=series.meta["blocks"],
                         conservation_drift=_conservation_drift(series))
    write_json(out / "manifest.json", manifest)
    return 0


def _classical_check(cfg: ExperimentConfig, times, alpha_nd, g) -> dict:
    """Reference comparison selected by [classical] check."""
    check = cfg.classical.check
    r1, r2, r3 = cfg.moduli()
    n = np.abs(alpha_nd) ** 2
    if check == "none":
        return {}
    if check == "tanh2":
        if r3 != 0 or r1 != r2:
            raise UsageError("tanh2 check needs r1 = r2 and r3 = 0")
        ref = cl.tanh2_solution(r1, g, times)
        return {"check": check, "max_abs_error_n3": float(np.abs(n[:, 2] - ref).max()), "reference": ref}
    if check == "sech2":
        if r1 != r2 or not 0 < r1 < r3:
            raise UsageError("sech2 check needs a small equal seed 0 < r1 = r2 < r3")
        delay = cl.sech2_delay(r3, g, r1)
        ref = cl.sech2_pulse(r3, g, times, delay)
        return {"check": check, "delay": delay, "max_abs_error_n1": float(np.abs(n[:, 0] - ref).max()),
                "reference": ref}
    if check == "netr":
        ref = cl.netr_solution(r1, r2, r3, g, times)
        drift = np.abs(np.abs(alpha_nd) - np.array([r1, r2, r3])).max()
        return {"check": check, "max_modulus_drift": float(drift),
                "max_abs_error_alpha": float(np.abs(alpha_nd - ref).max()),
                "reference": np.abs(ref[:, 2]) ** 2}
    # exact elliptic solution for n3
    s0 = cl.ClassicalState.from_array(alpha_nd[0])
    ref = cl.exact_n3(s0, g, times)
    scale = max(float(np.max(n)), 1e-300)
    return {"check": check, "max_rel_error_n3": float(np.abs(n[:, 2] - ref).max() / scale),
            "period": cl.n3_period(s0, g), "reference": ref}


def cmd_classical(cfg: ExperimentConfig) -> int:
    times = cfg.time_grid()
    out = _out_dir(cfg)
    amps = cfg.amplitudes()
    atol = cfg.classical.atol or None
    if cfg.model.kind == DEGENERATE:
        alpha = cl.integrate_batch(np.array([amps]), times, cfg.model.g_prime, cfg.classical.tol,
                                   atol, degenerate=True)[:, 0, :]
        # equivalent non-degenerate amplitudes for drift and checks
        alpha_nd = np.column_stack([alpha[:, 0], alpha[:, 0], math.sqrt(2.0) * alpha[:, 1]])
        g_nd, modes = math.sqrt(2.0) * cfg.model.g_prime, (1, 3)
    else:
        alpha = cl.integrate_batch(np.array([amps]), times, cfg.model.g, cfg.classical.tol,
                                   atol)[:, 0, :]
        alpha_nd, g_nd, modes = alpha, cfg.model.g, (1, 2, 3)
    drift = float(cl.invariant_drift(alpha_nd))
    cols = {"gt": times}
    for i, k in enumerate(modes):
        cols[f"re_alpha{k}"] = alpha[:, i].real
        cols[f"im_alpha{k}"] = alpha[:, i].imag
    for i, k in enumerate(modes):
        cols[f"n{k}"] = np.abs(alpha[:, i]) ** 2
    check = _classical_check(cfg, times, alpha_nd, g_nd)
    if "reference" in check:
        cols["reference"] = check.pop("reference")
    outputs = [write_table(out / "trajectory", cols, cfg.run.format)]
    write_json(out / "manifest.json", _manifest(cfg, "classical", outputs, invariant_drift=drift, **check))
    return 0


def _is_netr(cfg: ExperimentConfig) -> bool:
    r1, r2, r3 = cfg.moduli()
    if cfg.model.kind == DEGENERATE:
        r2, r3 = r1, math.sqrt(2.0) * r3
    if min(r1, r2, r3) <= 0:
        return False
    theta = (cfg.initial.phi1 + (cfg.initial.phi2 if cfg.model.kind == NONDEGENERATE else cfg.initial.phi1)
             - cfg.initial.phi3)
    return abs(r3 - cl.netr_amplitude(r1, r2)) <= 1e-9 * r3 and abs(math.sin(theta)) < 1e-12


def cmd_ensemble(cfg: ExperimentConfig) -> int:
    times = cfg.time_grid()
    out = _out_dir(cfg)
    e = cfg.ensemble
    degenerate = cfg.model.kind == DEGENERATE
    stats = run_ensemble(cfg.amplitudes(), e.n_traj, times, cfg.coupling, NoiseModel(e.sigma2), e.seed,
                         degenerate=degenerate, snapshots=e.snapshots, cloud_points=e.cloud_points,
                         workers=cfg.run.workers, chunk=e.chunk, tol=e.tol)
    cols = {"gt": times}
    fano, se = stats.fano_cl, stats.fano_stderr
    for i, k in enumerate(stats.modes):
        cols[f"mean_n{k}"] = stats.mean_n[:, i]
    for i, k in enumerate(stats.modes):
        cols[f"fano{k}"] = fano[:, i]
    for i, k in enumerate(stats.modes):
        cols[f"stderr{k}"] = se[:, i]
    outputs = [write_table(out / "stats", cols, cfg.run.format)]
    for t, pts in stats.clouds.items():
        mode_col = np.repeat(np.array(stats.modes), pts.shape[0])
        flat = pts.T.ravel()
        outputs.append(write_table(out / f"cloud_t{_tag(t)}",
                                   {"mode": mode_col, "re_alpha": flat.real, "im_alpha": flat.imag},
                                   cfg.run.format))
    summary = {"n_traj": stats.n_traj, "seed": stats.seed,
               "fano_t0": {str(k): float(fano[0, i]) for i, k in enumerate(stats.modes)},
               "max_invariant_drift": stats.max_invariant_drift}
    if times.size >= 16:
        plats = {str(k): plateau(stats, k).__dict__ for k in stats.modes}
        summary["plateau"] = plats
        if _is_netr(cfg) and not degenerate:
            r1, r2, _ = cfg.moduli()
            pred = netr_analytic(r1, r2)
            summary["netr_prediction"] = pred.__dict__
            summary["z_scores"] = {
                str(k): (plats[str(k)]["value"] - f) / plats[str(k)]["stderr"]
                for k, f in zip((1, 2, 3), (pred.F1, pred.F2, pred.F3))
            }
    outputs.append(write_json(out / "summary.json", summary))
    write_json(out / "manifest.json", _manifest(cfg, "ensemble", outputs))
    return 0


def _fit_block(xs, ys, regime: str, weighting: str) -> dict:
    pl = fit_power_law(xs, ys)
    ip = fit_inverse_polynomial(xs, ys, weighting)
    half = np.asarray(xs) >= np.median(xs)
    block = {"power_law": pl.as_dict(), "inverse_polynomial": ip.as_dict()}
    if half.sum() >= 4:
        block["inverse_polynomial_upper_half"] = fit_inverse_polynomial(
            np.asarray(xs)[half], np.asarray(ys)[half], weighting).as_dict()
    ratio = pl.error / ip.error if ip.error > 0 else math.inf
    block["power_law_to_polynomial_error_ratio"] = ratio
    block["power_law_residual_flag"] = bool(regime == IN_NETR and ratio > POWER_LAW_FLAG_RATIO)
    return block


def cmd_sweep(cfg: ExperimentConfig) -> int:
    s = cfg.sweep
    out = _out_dir(cfg)
    spec = SweepSpec(cfg.model_kind(), tuple(s.amplitudes), s.regime, s.points, cfg.quantum.eps_trunc)
    records = sweep_minima(spec, workers=cfg.run.workers)
    xs = np.array([r.x for r in records])
    n3 = np.array([r.n3_at_min for r in records])
    fm = np.array([r.f_min for r in records])
    outputs = [write_table(out / "minima", {"r": xs, "t_min": [r.t_min for r in records],
                                            "f_min": fm, "n3_at_min": n3}, cfg.run.format)]
    fits = {"regime": s.regime, "model": spec.model.tag, "grid": list(xs),
            "abscissa_note": "n3 evaluated at t_min of each first minimum"}
    if len(records) >= 4:
        fits["vs_r"] = _fit_block(xs, fm, s.regime, s.weighting)
        fits["vs_n3"] = _fit_block(n3, fm, s.regime, s.weighting)
    outputs.append(write_json(out / "fits.json", fits))
    write_json(out / "manifest.json", _manifest(cfg, "sweep", outputs))
    return 0


def netr_report(r1: float, r2: float) -> dict:
    pred = netr_analytic(r1, r2)
    hi, lo = max(r1, r2), min(r1, r2)
    rho = hi * hi / (lo * lo)
    f3, f_hi, f_lo = netr_fano_ratio(rho)
    f1, f2 = (f_hi, f_lo) if r1 >= r2 else (f_lo, f_hi)
    return {"r1": r1, "r2": r2, "r3": pred.r3, "Omega_bar": pred.Omega_bar, "A": pred.A,
            "F1": pred.F1, "F2": pred.F2, "F3": pred.F3,
            "rho": rho, "ratio_form": {"F1": f1, "F2": f2, "F3": f3}}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twmlab", description="Three-wave mixing photon statistics.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("quantum", "classical", "ensemble", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI configuration file")
        sp.add_argument("--preset", help=f"named preset ({', '.join(preset_names())})")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--format", choices=("csv", "json"))
    sp = sub.add_parser("netr", help="closed-form no-energy-transfer values")
    sp.add_argument("r1", type=float)
    sp.add_argument("r2", type=float)
    sp.add_argument("--out", type=Path)
    return p


def _resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.preset:
        load_preset(cfg, args.preset)
    if args.config:
        load_file(cfg, args.config)
    for spec in args.set:
        apply_override(cfg, spec)
    if args.seed is not None:
        apply_override(cfg, f"ensemble.seed={args.seed}")
    if args.workers is not None:
        apply_override(cfg, f"run.workers={args.workers}")
    if args.out is not None:
        cfg.run.out = str(args.out)
    if args.format is not None:
        cfg.run.format = args.format
    return cfg


COMMANDS = {"quantum": cmd_quantum, "classical": cmd_classical, "ensemble": cmd_ensemble, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "netr":
            if not (args.r1 > 0 and args.r2 > 0):
                raise UsageError("r1 and r2 must be positive")
            report = netr_report(args.r1, args.r2)
            if args.out:
                args.out.mkdir(parents=True, exist_ok=True)
                write_json(args.out / "netr.json", report)
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0
        cfg = _resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, UsageError, CutoffError) as exc:
        print(f"twmlab: error: {exc}", file=sys.stderr)
        return 2
    except (BudgetError, cl.StepFailure, NoMinimumError, OSError, ValueError, ArithmeticError) as exc:
        print(f"twmlab: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
