"""Command-line front end: one subcommand per experiment.

Exit codes: 0 success, 2 scenario or usage error, 3 solver did not
converge, 4 the zero-false-positive audit found a counterexample.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import sys

import numpy as np

from . import __version__
from .defense import (
    conservative_defense,
    evaluate,
    optimality_spot_check,
    zero_fp_audit,
)
from .errors import (
    AgentEvaluationError,
    GridSpecError,
    ScreeningError,
    SolverDidNotConverge,
)
from .geometry import (
    CostKind,
    Mode,
    boundary_intersection,
    cost_gap_pair,
    general_position,
    wedge_pair,
)
from .oracle import MAX_NODES_PER_AXIS, GridSpec, oracle_response
from .population import default_raster_grid, rasterize
from .response import (
    Method,
    best_response,
    conjunction_closed_form_2d,
    cost_gap,
    sequential_closed_form_2d,
)
from .scenario import (
    RASTER_HEADER,
    Results,
    Scenario,
    dumps_results,
    dumps_table,
    load_scenario,
    write_results,
)
from .solver import DEFAULT_TOL

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_SOLVER = 3
EXIT_COUNTEREXAMPLE = 4

DEFAULT_AUDIT_RES = 0.05
DEFAULT_VERIFY_RES = 0.02
ORACLE_AXIS_CAP = {1: MAX_NODES_PER_AXIS, 2: MAX_NODES_PER_AXIS, 3: 48}
VERIFY_MARGINS = (0.5, 1.5, 4.5)
VERIFY_MAX_AGENTS = 64


class UsageError(ScreeningError):
    pass


def _config(args, sc: Scenario) -> dict:
    mode = Mode(args.mode) if args.mode else sc.pipeline.mode
    return {
        "mode": mode.value,
        "tau": sc.tau if args.tau is None else args.tau,
        "tol": DEFAULT_TOL if args.tol is None else args.tol,
        "grid_res": args.grid_res,
        "seed": sc.seed if args.seed is None else args.seed,
        "cost": sc.cost.to_dict(),
    }


def _metadata(command, sc, cfg, **extra) -> dict:
    meta = {"command": command, "scenario": sc.name, "config": cfg, "version": __version__}
    meta.update(extra)
    meta["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return meta


def _agents(sc: Scenario, cfg) -> np.ndarray:
    return sc.agent_points(seed=cfg["seed"])


def _pair(sc: Scenario, command):
    if sc.k != 2 or sc.dim != 2:
        raise UsageError(f"{command} needs exactly two classifiers in the plane")
    return sc.pipeline.classifiers


def _plan_dict(i, x, plan) -> dict:
    return {
        "agent": i,
        "start": x,
        "path": plan.path,
        "leg_costs": list(plan.leg_costs),
        "total_cost": plan.total_cost,
        "method": plan.method.value,
        "certificate": None if plan.certificate is None else plan.certificate.to_dict(),
        "certified": None if plan.certificate is None else plan.certificate.certified,
    }


# --------------------------------------------------------------------------
# subcommands


def cmd_respond(sc: Scenario, cfg) -> Results:
    pipe = sc.pipeline.with_mode(cfg["mode"])
    X = _agents(sc, cfg)
    plans = []
    for i, x in enumerate(X):
        try:
            plan = best_response(pipe, x, sc.cost, cfg["tol"])
        except SolverDidNotConverge as exc:
            raise AgentEvaluationError(i, exc) from exc
        plans.append(_plan_dict(i, x, plan))
    table = (
        ("agent", "total_cost", "method", "certified"),
        [(p["agent"], p["total_cost"], p["method"], p["certified"]) for p in plans],
    )
    data = {"mode": pipe.mode.value, "cost": sc.cost.to_dict(), "plans": plans}
    return Results("plans", data, _metadata("respond", sc, cfg), table)


def cmd_region(sc: Scenario, cfg) -> Results:
    h1, h2 = _pair(sc, "region")
    tau = cfg["tau"]
    if sc.grid is not None and cfg["grid_res"] is None:
        grid = sc.grid
    else:
        grid = default_raster_grid(h1, h2, tau)
        if cfg["grid_res"] is not None:
            grid = GridSpec(grid.lower, grid.upper, cfg["grid_res"])
    r = rasterize(h1, h2, tau, grid)
    rows = list(r.rows())
    data = {
        "tau": tau,
        "grid": grid.to_dict(),
        "shape": list(r.shape),
        "region_counts": r.region_counts(),
        "cells_seq": int(r.ok_seq.sum()),
        "cells_conj": int(r.ok_conj.sum()),
        "columns": list(RASTER_HEADER),
        "cells": [list(row) for row in rows],
    }
    return Results("raster", data, _metadata("region", sc, cfg), (RASTER_HEADER, rows))


def cmd_defend(sc: Scenario, cfg) -> Results:
    d = conservative_defense(sc.pipeline.with_mode(cfg["mode"]), cfg["tau"])
    data = d.to_dict()
    try:
        data["general_position"] = general_position(d.shifted.classifiers)
    except ScreeningError:
        data["general_position"] = False
    table = (("test", "w", "b_original", "b_shifted"),
             [(i, " ".join(repr(float(v)) for v in h.w), h.b, g.b)
              for i, (h, g) in enumerate(zip(d.original.classifiers, d.shifted.classifiers))])
    return Results("defended_pipeline", data, _metadata("defend", sc, cfg), table)


def cmd_evaluate(sc: Scenario, cfg) -> Results:
    tau = cfg["tau"]
    d = conservative_defense(sc.pipeline, tau)
    X = _agents(sc, cfg)
    reports = [evaluate(d, X, tau, sc.cost, m, cfg["tol"]) for m in (Mode.SEQUENTIAL, Mode.CONJUNCTION)]
    seq, conj = reports
    data = {
        "tau": tau,
        "n_agents": len(X),
        "reports": [r.to_dict() for r in reports],
        "tp_seq_minus_tp_conj": seq.tp_rate - conj.tp_rate,
    }
    table = (("setting", "tp_rate", "fp_rate", "tn_rate", "fn_rate", "n_agents"),
             [(r.setting.value, r.tp_rate, r.fp_rate, r.tn_rate, r.fn_rate, r.n_agents) for r in reports])
    return Results("evaluation", data, _metadata("evaluate", sc, cfg), table)


def _gap_row(param, value, i, x, h1, h2, cost, tol) -> dict:
    g = cost_gap(h1, h2, x, cost, tol)
    return {"param": param, "value": value, "agent": i, "x": x,
            "c_conj": g.c_conj, "c_seq": g.c_seq, "ratio": g.ratio}


def cmd_gap(sc: Scenario, cfg) -> Results:
    cost, tol = sc.cost, cfg["tol"]
    rows = []
    if sc.sweep is None:
        h1, h2 = _pair(sc, "gap")
        for i, x in enumerate(_agents(sc, cfg)):
            rows.append(_gap_row("none", 0.0, i, x, h1, h2, cost, tol))
    else:
        if sc.dim != 2:
            raise UsageError("sweeps are planar")
        has_agents = sc.agents is not None or sc.population is not None or sc.grid is not None
        for v in sc.sweep.values:
            if sc.sweep.param == "gamma":
                h1, h2 = cost_gap_pair(v)
                default = [np.zeros(2)]
            else:
                h1, h2 = wedge_pair(v)
                default = [np.array([0.0, -1.0])]
            X = _agents(sc, cfg) if has_agents else default
            for i, x in enumerate(X):
                rows.append(_gap_row(sc.sweep.param, v, i, x, h1, h2, cost, tol))
    header = ("param", "value", "agent", "x1", "x2", "c_conj", "c_seq", "ratio")
    table = (header, [(r["param"], r["value"], r["agent"], *map(float, r["x"]),
                       r["c_conj"], r["c_seq"], r["ratio"]) for r in rows])
    return Results("gap", {"rows": rows}, _metadata("gap", sc, cfg), table)


def _audit_grid(sc: Scenario, tau, res) -> GridSpec:
    if sc.grid is not None and res is None:
        return sc.grid
    h = DEFAULT_AUDIT_RES if res is None else res
    cls = sc.pipeline.classifiers
    pts = []
    for i in range(len(cls)):
        for j in range(i + 1, len(cls)):
            try:
                pts.append(boundary_intersection(cls[i], cls[j]))
            except ScreeningError:
                continue
    if not pts:
        pts = [np.zeros(2)]
    return GridSpec.around(np.array(pts), 2.0 * tau + 1.0, h)


def cmd_audit(sc: Scenario, cfg) -> Results:
    if sc.dim != 2:
        raise UsageError("the audit is defined for planar scenarios")
    tau = cfg["tau"]
    d = conservative_defense(sc.pipeline, tau)
    grid = _audit_grid(sc, tau, cfg["grid_res"])
    res = zero_fp_audit(d, tau, sc.cost, grid, err=cfg["tol"])
    data = res.to_dict()
    data["grid"] = grid.to_dict()
    try:
        spot = optimality_spot_check(d, tau, sc.cost)
        data["optimality_spot_check"] = {"applicable": spot.applicable, "faces": list(spot.faces),
                                         "passed": spot.passed}
    except ScreeningError as exc:
        data["optimality_spot_check"] = {"applicable": False, "faces": [], "passed": False,
                                         "reason": str(exc)}
    table = (("passed", "tau", "n_checked", "counterexample_x1", "counterexample_x2", "setting", "cost"),
             [(res.passed, tau, res.n_checked,
               *(res.counterexample.tolist() if res.counterexample is not None else (None, None)),
               None if res.counterexample_setting is None else res.counterexample_setting.value,
               res.counterexample_cost)])
    return Results("audit", data, _metadata("audit", sc, cfg), table)


def _verify_grid(points, res, d, margin) -> GridSpec:
    pts = np.asarray(points, float)
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    cap = ORACLE_AXIS_CAP[d] - 1
    h = max(res, float((hi - lo).max()) / cap)
    return GridSpec(lo, hi, h)


def _oracle_around(pipe, x, cost, plan, res):
    """Oracle on a box around the solver path; thin accept regions may hold
    no node in a tight box, so the margin grows until one is found."""
    pts = np.vstack([plan.path, x[None]])
    for margin in VERIFY_MARGINS:
        grid = _verify_grid(pts, res, pipe.dim, margin)
        try:
            return grid, oracle_response(pipe, x, cost, grid)
        except GridSpecError:
            if margin == VERIFY_MARGINS[-1]:
                raise


def cmd_verify(sc: Scenario, cfg) -> Results:
    """Solver vs closed form vs grid oracle for every agent in both settings."""
    if sc.dim > 3 or sc.k > 3:
        raise UsageError("verify runs the grid oracle, which handles d <= 3 and k <= 3")
    if not sc.cost.is_norm:
        raise UsageError("verify needs a norm cost (the oracle bound is undefined otherwise)")
    res = DEFAULT_VERIFY_RES if cfg["grid_res"] is None else cfg["grid_res"]
    tol = cfg["tol"]
    rows = []
    planar_pair = sc.k == 2 and sc.dim == 2 and sc.cost.kind is CostKind.L2
    X = _agents(sc, cfg)
    # one oracle solve per agent and setting: large populations are thinned
    # to evenly spaced agents
    picked = np.unique(np.linspace(0, len(X) - 1, min(len(X), VERIFY_MAX_AGENTS)).round().astype(int))
    for i in picked.tolist():
        x = X[i]
        for mode in (Mode.SEQUENTIAL, Mode.CONJUNCTION):
            pipe = sc.pipeline.with_mode(mode)
            plan = best_response(pipe, x, sc.cost, tol, closed_form=False)
            cf = math.nan
            if planar_pair:
                try:
                    fn = sequential_closed_form_2d if mode is Mode.SEQUENTIAL else conjunction_closed_form_2d
                    cf = fn(*pipe.classifiers, x).total_cost
                except ScreeningError:
                    cf = math.nan
            grid, orc = _oracle_around(pipe, x, sc.cost, plan, res)
            slack = max(tol, 1e-9)
            solver_ok = plan.total_cost <= orc.cost + slack and orc.cost <= plan.total_cost + orc.error_bound + slack
            cf_ok = math.isnan(cf) or abs(cf - plan.total_cost) <= max(1e-4, 1e-4 * cf)
            rows.append({
                "agent": i, "setting": mode.value, "closed_form": cf, "solver": plan.total_cost,
                "oracle": orc.cost, "oracle_error_bound": orc.error_bound, "oracle_h": grid.h,
                "certified": None if plan.certificate is None else plan.certificate.certified,
                "agree": bool(solver_ok and cf_ok),
            })
    header = ("agent", "setting", "closed_form", "solver", "oracle", "oracle_error_bound", "oracle_h",
              "certified", "agree")
    table = (header, [tuple(r[h] for h in header) for r in rows])
    data = {"agents_total": len(X), "agents_checked": len(picked), "rows": rows,
            "all_agree": all(r["agree"] for r in rows)}
    return Results("verify", data, _metadata("verify", sc, cfg, solver_method=Method.CONVEX_SOLVER.value), table)


COMMANDS = {
    "respond": (cmd_respond, "best-response plan for every agent"),
    "region": (cmd_region, "raster of sequential and simultaneous manipulation regions"),
    "defend": (cmd_defend, "conservative threshold-shifted pipeline"),
    "evaluate": (cmd_evaluate, "confusion rates of the defended pipeline in both settings"),
    "gap": (cmd_gap, "simultaneous vs sequential cost table, optionally over a sweep"),
    "audit": (cmd_audit, "raster search for false positives of the defended pipeline"),
    "verify": (cmd_verify, "solver vs closed form vs grid oracle comparison"),
}


def _positive(v):
    x = float(v)
    if not math.isfinite(x) or x <= 0:
        raise argparse.ArgumentTypeError("must be a positive number")
    return x


def _nonneg(v):
    x = float(v)
    if not math.isfinite(x) or x < 0:
        raise argparse.ArgumentTypeError("must be a non-negative number")
    return x


def _seed(v):
    x = int(v)
    if x < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return x


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strategic-screening",
        description="Strategic manipulation of sequential screening pipelines.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output file (default: standard output)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--tau", type=_nonneg, help="override the manipulation budget")
        p.add_argument("--tol", type=_positive, help="solver tolerance (default 1e-6)")
        p.add_argument("--grid-res", type=_positive, help="grid resolution for rasters and oracles")
        p.add_argument("--seed", type=_seed, help="override the population seed")
        p.add_argument("--mode", choices=[m.value for m in Mode], help="override the deployment mode")
    return parser


def _emit(results: Results, args):
    if args.out:
        write_results(results, args.out, args.format)
        return
    if args.format == "csv":
        if results.table is None:
            raise UsageError(f"{results.type} results have no CSV form; use json")
        sys.stdout.write(dumps_table(*results.table))
    else:
        sys.stdout.write(dumps_results(results))


def _is_solver_failure(exc) -> bool:
    return isinstance(exc, SolverDidNotConverge) or (
        isinstance(exc, AgentEvaluationError) and isinstance(exc.cause, SolverDidNotConverge)
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, _ = COMMANDS[args.command]
    try:
        sc = load_scenario(args.scenario)
        cfg = _config(args, sc)
        results = fn(sc, cfg)
        _emit(results, args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        if _is_solver_failure(exc):
            print(f"error: solver did not converge: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        if isinstance(exc, (ScreeningError, ValueError, OSError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_SCENARIO
        raise
    if results.type == "audit" and not results.data["passed"]:
        print("audit found a counterexample", file=sys.stderr)
        return EXIT_COUNTEREXAMPLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
