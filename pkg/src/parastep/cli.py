"""Command-line harness: reproduce the analysis figures and experiment
tables from declarative JSON configs, emitting CSV/JSON artifacts.

Subcommands: analyze | optimize | linear | nonlinear | stability | contour | jorder
Common flags: --config <json> --out <dir> --seed <int> --threads <int>
              --profile {paper|test}
"""

from __future__ import annotations

import argparse
import csv
import json
import math
from pathlib import Path

import numpy as np

from . import analysis, optimizer, parareal, problems
from .propagators import (
    SingleStepScheme,
    ThetaParams,
    TwoStepScheme,
    catalog,
    load_scheme,
    save_scheme,
    two_step_from_theta,
)

PROFILES = {"paper": {"n_cells": 1000}, "test": {"n_cells": 200}}

_TABLE_KAPPA_NC = 1000


def _resolve_scheme(ref: str):
    if ref.endswith(".json"):
        return load_scheme(ref)
    return catalog(ref)


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rho_csv(path: Path, ts: TwoStepScheme, grid) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "abs_rho1", "abs_rho2"])
        for s in grid.samples:
            r1, r2 = analysis.rho_pair(ts, float(s))
            w.writerow([repr(float(s)), repr(abs(r1)), repr(abs(r2))])


def cmd_analyze(cfg: dict, out: Path, args) -> None:
    grid = analysis.default_grid()
    j_list = cfg.get("J_list", [10, 20, 40, 80])
    n_c = int(cfg.get("N_c", _TABLE_KAPPA_NC))
    fp = catalog(cfg.get("fp", "radau_iia_3"))
    for ref in cfg.get("schemes", ["bdf2", "o2cp"]):
        ts = _resolve_scheme(ref)
        if not isinstance(ts, TwoStepScheme):
            raise SystemExit(f"analyze expects two-step schemes, got {ref!r}")
        name = Path(ref).stem if ref.endswith(".json") else ref
        _write_rho_csv(out / f"{name}_rho.csv", ts, grid)
        ge = analysis.sup_over_grid(lambda s: analysis.gamma_e(ts, s), grid)
        ge.write_csv(out / f"{name}_gamma_e.csv")
        ke = analysis.sup_over_grid(lambda s: analysis.kappa_e(ts, s, n_c), grid)
        ke.write_csv(out / f"{name}_kappa_e.csv")
        summary = {
            "scheme": name,
            "N_c": n_c,
            "gamma_e_star": ge.sup,
            "gamma_e_argmax": ge.argmax,
            "kappa_e_star": ke.sup,
            "kappa_e_argmax": ke.argmax,
            "gamma_c_star": {},
            "kappa_c_star": {},
        }
        for J in j_list:
            gc = analysis.sup_over_grid(
                lambda s: analysis.gamma_c(fp.stability, ts, J, s), grid
            )
            gc.write_csv(out / f"{name}_gamma_c_J{J}.csv")
            kc = analysis.sup_over_grid(
                lambda s: analysis.kappa_c(fp.stability, ts, J, s, n_c), grid
            )
            kc.write_csv(out / f"{name}_kappa_c_J{J}.csv")
            summary["gamma_c_star"][str(J)] = gc.sup
            summary["kappa_c_star"][str(J)] = kc.sup
        _dump_json(out / f"{name}_summary.json", summary)


def _cp_config(name: str):
    """Map a table column name to (catalog name, extrapolated flag)."""
    if name.endswith("-e"):
        return name[:-2], True
    return name, False


def _factor_columns(cp_name: str):
    """Analytic factor entries for the summary table."""
    base, _ = _cp_config(cp_name)
    scheme = catalog(base)
    grid = analysis.default_grid()
    if isinstance(scheme, TwoStepScheme):
        ge = analysis.sup_over_grid(lambda s: analysis.gamma_e(scheme, s), grid).sup
        ke = analysis.sup_over_grid(
            lambda s: analysis.kappa_e(scheme, s, _TABLE_KAPPA_NC), grid
        ).sup
        return ge, ke
    ge = analysis.sup_over_grid(
        lambda s: analysis.single_step_gamma(scheme.stability, s), grid
    ).sup
    return ge, None


def _run_cp(cp_name: str, config_kwargs: dict, sys, u0) -> parareal.IterationTrace:
    base, extrapolated = _cp_config(cp_name)
    scheme = catalog(base)
    cfg = parareal.PararealConfig(cp=base, cp_extrapolated=extrapolated, **config_kwargs)
    if isinstance(scheme, TwoStepScheme):
        return parareal.run_two_step(cfg, sys, u0)
    return parareal.run_single_step(cfg, sys, u0)


def _experiment(kind: str, cfg: dict, out: Path, args) -> None:
    n_cells = int(cfg.get("n_cells", PROFILES[args.profile]["n_cells"]))
    J = int(cfg.get("J", 50))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tol = float(cfg.get("tol", 1e-9))
    k_max = int(cfg.get("K_max", 30))
    fp = cfg.get("fp", "radau_iia_3")

    if kind == "linear":
        case = str(cfg.get("case", "i"))
        prob = problems.linear_problem(case, n_cells)
        dt = float(cfg.get("dt", 0.01))
        cps = cfg.get("cps", ["sdirk2", "bdf2", "ocp", "o2cp"])
        meta = {"kind": "linear", "case": case, "c_L": None}
    else:
        c_L = float(cfg.get("c_L", 1))
        prob = problems.semilinear_problem(c_L, n_cells)
        dt = float(cfg.get("dt", 0.01 / c_L))
        cps = cfg.get("cps", ["sdirk2", "bdf2", "ocp-e", "o2cp", "o2cp-e"])
        meta = {"kind": "nonlinear", "case": None, "c_L": c_L}

    common = dict(
        T=prob.T,
        J=J,
        dt=dt,
        fp=fp,
        K_max=k_max,
        tol=tol,
        seed=seed,
        init_mode=cfg.get("init_mode", "random"),
        threads=args.threads,
    )
    columns = {}
    for cp_name in cps:
        trace = _run_cp(cp_name, common, prob.system, prob.u0)
        trace.write_csv(out / f"{cp_name}_trace.csv")
        ge, ke = _factor_columns(cp_name)
        try:
            emp = parareal.empirical_factor(trace)
        except parareal.InsufficientTrace:
            emp = None
        entry = {
            "gamma_e_star": ge,
            "kappa_e_star": ke,
            "empirical_factor": emp,
            "cost_per_iteration": (
                float(np.mean(trace.cp_costs)) if trace.cp_costs else None
            ),
            "iterations": trace.iterations_to_tol,
            "speedup": (
                parareal.speedup(trace, trace.fine_reference_cost)
                if trace.iterations_to_tol
                else None
            ),
            "errors": [float(e) for e in trace.errors],
            "finite_convergence": (
                bool(max(trace.finite_convergence) <= 1e-11)
                if trace.finite_convergence
                else None
            ),
        }
        columns[cp_name] = entry
    table = {
        "problem": {
            **meta,
            "J": J,
            "dt": dt,
            "n_cells": n_cells,
            "fp": fp,
            "tol": tol,
            "seed": seed,
        },
        "columns": columns,
    }
    _dump_json(out / "table.json", table)


def cmd_linear(cfg, out, args):
    _experiment("linear", cfg, out, args)


def cmd_nonlinear(cfg, out, args):
    _experiment("nonlinear", cfg, out, args)


def cmd_optimize(cfg: dict, out: Path, args) -> None:
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    init = cfg.get("init", [0.0, 0.0, 0.0, 0.0])
    init = optimizer.RANDOM_INIT if init == "random" else ThetaParams.from_array(init)
    config = optimizer.OptimizerConfig(
        mu0=float(cfg.get("mu0", 1e-2)),
        sigma=float(cfg.get("sigma", 0.5)),
        outer_iters=int(cfg.get("outer_iters", 10)),
        inner_iters=int(cfg.get("inner_iters", 1000)),
        step_size=float(cfg.get("step_size", 0.05)),
        grad_tolerance=float(cfg.get("grad_tolerance", 1e-6)),
        seed=seed,
        init=init,
    )
    theta, trace = optimizer.optimize(config)
    trace.write_csv(out / "trace.csv")
    scheme = two_step_from_theta(theta, name="optimized")
    save_scheme(scheme, out / "scheme.json")
    final_ls = optimizer.loss_s(theta, config.grid)
    _dump_json(
        out / "theta.json",
        {
            "theta": list(theta.as_array()),
            "loss_s": final_ls,
            "stopped_early": trace.stopped_early,
            "resamples": trace.resamples,
            "trace_rows": len(trace.rows),
        },
    )


def cmd_stability(cfg: dict, out: Path, args) -> None:
    theta_count = int(cfg.get("theta_count", 10000))
    verdicts = {}
    for ref in cfg.get("schemes", ["bdf2", "o2cp"]):
        ts = _resolve_scheme(ref)
        name = Path(ref).stem if ref.endswith(".json") else ref
        locus = analysis.boundary_locus(ts, theta_count)
        with open(out / f"{name}_locus.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "re_mu", "im_mu"])
            for t, mu in zip(locus.thetas, locus.mu):
                if np.isnan(mu.real):
                    continue
                w.writerow([repr(float(t)), repr(float(mu.real)), repr(float(mu.imag))])
        report = analysis.a_stability_check(ts, theta_count)
        verdicts[name] = {
            "a_stable": report.a_stable,
            "worst_f": report.worst_f,
            "worst_theta": report.worst_theta,
            "locus_poles_skipped": len(locus.skipped),
        }
    _dump_json(out / "stability.json", verdicts)


def cmd_contour(cfg: dict, out: Path, args) -> None:
    kind = cfg.get("kind", "gamma_e")
    re_range = tuple(cfg.get("re_range", [-2.0, 10.0]))
    im_range = tuple(cfg.get("im_range", [-8.0, 8.0]))
    resolution = tuple(cfg.get("resolution", [121, 121]))
    n_c = int(cfg.get("N_c", _TABLE_KAPPA_NC))
    meta = {}
    for ref in cfg.get("schemes", ["bdf2", "o2cp"]):
        ts = _resolve_scheme(ref)
        name = Path(ref).stem if ref.endswith(".json") else ref
        xs, ys, mat = analysis.contour_map(kind, ts, re_range, im_range, resolution, n_c)
        analysis.write_contour_csv(out / f"{name}_{kind}.csv", xs, ys, mat)
        finite = mat[np.isfinite(mat)]
        meta[name] = {
            "kind": kind,
            "sentinels": int(np.isinf(mat).sum()),
            "max_finite": float(finite.max()) if finite.size else None,
        }
    _dump_json(out / "contour.json", meta)


def cmd_jorder(cfg: dict, out: Path, args) -> None:
    ts = _resolve_scheme(cfg.get("ts", "o2cp"))
    j_list = cfg.get("J_list", [10, 20, 40, 80])
    rows = []
    slopes = {}
    for fp_name in cfg.get("fps", ["radau_iia_2", "lobatto_iiic_3", "radau_iia_3"]):
        fp = catalog(fp_name)
        gaps, slope = analysis.j_order_study(fp.stability, ts, j_list)
        slopes[fp_name] = slope
        for J, gap in gaps:
            rows.append((fp_name, J, gap))
    with open(out / "jorder.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fp", "J", "gap"])
        for fp_name, J, gap in rows:
            w.writerow([fp_name, J, repr(gap)])
    _dump_json(out / "jorder.json", {"slopes": slopes})


_COMMANDS = {
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "linear": cmd_linear,
    "nonlinear": cmd_nonlinear,
    "stability": cmd_stability,
    "contour": cmd_contour,
    "jorder": cmd_jorder,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="parastep", description=__doc__)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--profile", choices=sorted(PROFILES), default="paper")
    args = parser.parse_args(argv)

    cfg = {}
    if args.config is not None:
        cfg = json.loads(args.config.read_text(encoding="utf-8"))
    args.out.mkdir(parents=True, exist_ok=True)
    _COMMANDS[args.command](cfg, args.out, args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
