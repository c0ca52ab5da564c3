"""Command line interface.

Exit codes: 0 success (validation warnings allowed), 1 ``verify`` outside its
error budget, 2 configuration or hard validation error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import io
from .config import RunConfig, load_config, with_overrides
from .grid import build_grid
from .model import ConfigurationError, validate_game
from .montecarlo import SimConfig, estimate_value
from .plot import value_svg
from .solver import SolverError, howard_solve
from .strategy import classify_regions, extract_switch_sets, format_switch_sets

EXIT_OK, EXIT_BUDGET, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

COMMANDS = ("validate", "solve", "regions", "thresholds", "simulate", "verify", "plot")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="game or run config (JSON)")
    common.add_argument("--grid-n", type=int, dest="grid_n")
    common.add_argument("--xmin", type=float, dest="grid_x_min")
    common.add_argument("--xmax", type=float, dest="grid_x_max")
    common.add_argument("--tol", type=float, dest="solver_tol")
    common.add_argument("--max-iter", type=int, dest="solver_max_iter")
    common.add_argument("--tol-active", type=float, dest="solver_tol_active")
    common.add_argument("-v", "--verbose", action="store_true")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--x0", type=float, dest="sim_x0")
    sim.add_argument("--i0", type=int, dest="sim_i0")
    sim.add_argument("--j0", type=int, dest="sim_j0")
    sim.add_argument("--dt", type=float, dest="sim_dt")
    sim.add_argument("--horizon", type=float, dest="sim_horizon")
    sim.add_argument("--paths", type=int, dest="sim_paths")
    sim.add_argument("--seed", type=int, dest="sim_seed")

    p = argparse.ArgumentParser(prog="switchgame",
                                description="Zero-sum switching games: solve, analyse, simulate.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", parents=[common], help="check cost conditions and loops")
    v.add_argument("--strict-loops", action="store_true",
                   help="treat zero-balance switching cycles as errors")
    s = sub.add_parser("solve", parents=[common], help="solve and write the value CSV")
    s.add_argument("--out")
    r = sub.add_parser("regions", parents=[common], help="write region labels per node")
    r.add_argument("--out")
    t = sub.add_parser("thresholds", parents=[common], help="print switching sets")
    t.add_argument("--csv", "--out", dest="out")
    t.add_argument("--mode", choices=("terminal", "direct"), default="terminal")
    m = sub.add_parser("simulate", parents=[common, sim], help="Monte Carlo payoff estimate")
    m.add_argument("--out")
    vf = sub.add_parser("verify", parents=[common, sim], help="compare Monte Carlo with V(x0)")
    vf.add_argument("--rel-budget", type=float, default=0.02,
                    help="relative bias allowance on top of 3 standard errors")
    pl = sub.add_parser("plot", parents=[common], help="SVG plot of the value functions")
    pl.add_argument("--out")
    return p


def _solve(cfg: RunConfig):
    grid = build_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
    V, _, report = howard_solve(cfg.game, grid, cfg.solver.tol, cfg.solver.max_iter)
    print(report.summary())
    return grid, V


def _sim_config(cfg: RunConfig) -> SimConfig:
    s = cfg.simulation
    return SimConfig(x0=s.x0, i0=s.i0, j0=s.j0, dt=s.dt, horizon=s.horizon,
                     n_paths=s.paths, base_seed=s.seed)


def _run(args, cfg: RunConfig) -> int:
    out_defaults = cfg.output
    cmd = args.command
    if cmd == "validate":
        grid = build_grid(cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n)
        report = validate_game(cfg.game, grid.nodes, "error" if args.strict_loops else "warn")
        for line in report.lines():
            print(line)
        print(f"rho={report.info['rho']:.6g} r={cfg.game.r:g}")
        print("PASS" if report.passed else "FAIL")
        return EXIT_OK if report.passed else EXIT_CONFIG

    grid, V = _solve(cfg)
    if cmd == "solve":
        out = args.out or out_defaults.values
        if out:
            io.write_value_csv(io.ensure_parent(out), V)
        return EXIT_OK
    if cmd == "regions":
        regions = classify_regions(V, cfg.game, grid, cfg.solver.tol_active)
        out = args.out or out_defaults.regions
        if out:
            io.write_regions_csv(io.ensure_parent(out), regions)
        return EXIT_OK
    if cmd == "thresholds":
        sets = extract_switch_sets(V, cfg.game, grid, cfg.solver.tol_active, mode=args.mode)
        print(format_switch_sets(sets, grid))
        out = args.out or out_defaults.thresholds
        if out:
            io.write_switch_sets_csv(io.ensure_parent(out), sets, grid)
        return EXIT_OK
    if cmd == "plot":
        out = args.out or out_defaults.plot or "values.svg"
        name = cfg.source.stem if cfg.source else "game"
        io.ensure_parent(out).write_text(value_svg(V, f"Value functions ({name})"))
        return EXIT_OK

    sc = _sim_config(cfg)
    est = estimate_value(cfg.game, V, sc, cfg.solver.tol_active)
    if cmd == "simulate":
        out = args.out or out_defaults.paths
        if out:
            io.write_paths_csv(io.ensure_parent(out), est.totals, est.valid)
        print("mean,std_error,tail_bound,n_valid")
        print(est.summary())
        return EXIT_OK
    # verify
    v0 = V(sc.i0, sc.j0, sc.x0)
    err = abs(est.mean - v0)
    budget = 3 * est.std_error + args.rel_budget * abs(v0)
    ok = err <= budget
    print(f"V{sc.i0}{sc.j0}({sc.x0:g})={v0:.10g} mean={est.mean:.10g} std_error={est.std_error:.4g} "
          f"|mean-V|={err:.4g} budget={budget:.4g} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_BUDGET


def run_command(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {k: v for k, v in vars(args).items()
                     if k.startswith(("grid_", "solver_", "sim_"))}
        cfg = with_overrides(cfg, **overrides)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _run(args, cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
