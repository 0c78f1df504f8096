"""Command-line entry point: ``relaxdual {run,oracle,validate}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
Warnings are printed but never change the exit code.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager

import numpy as np

from . import graph as graphs
from .coordinator import validate_stepsize
from .errors import (
    ConfigError,
    ConnectivityFailure,
    DimensionMismatch,
    InvalidSize,
    NonConvergence,
    TooLarge,
)
from .experiment import (
    apply_overrides,
    build_graph,
    build_problem,
    load_config,
    run_experiment,
    run_seeds,
    summary_text,
)
from .oracle import check_m_bound, solve_dual_centralized, solve_grid
from .problem import slater_check

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("relaxdual")


class StageError(Exception):
    def __init__(self, stage, exc, code):
        super().__init__(f"{stage}: {exc}")
        self.stage, self.exc, self.code = stage, exc, code


@contextmanager
def stage(name):
    """Tag any failure inside the block with the module.operation that raised it."""
    try:
        yield
    except StageError:
        raise
    except (ConfigError, ConnectivityFailure, InvalidSize, DimensionMismatch) as exc:
        raise StageError(name, exc, EXIT_CONFIG) from exc
    except (NonConvergence, TooLarge) as exc:
        raise StageError(name, exc, EXIT_SOLVER) from exc
    except OSError as exc:
        raise StageError(name, exc, EXIT_IO) from exc
    except ValueError as exc:
        raise StageError(name, exc, EXIT_CONFIG) from exc


def _config(args):
    with stage("experiment.load_config"):
        cfg = load_config(args.config)
        return apply_overrides(
            cfg, seed=args.seed, iters=args.iters, out=args.out,
            big_m=args.big_m, step_c=args.step_c, step_a=args.step_a,
        )


def cmd_run(args):
    cfg = _config(args)
    if args.seeds and args.seeds > 1:
        base = cfg.problem.seed
        with stage("experiment.run_experiment"):
            results = run_seeds(cfg, range(base, base + args.seeds))
        for res in results:
            print(f"# {res.out_dir}")
            print(summary_text(res.summary))
        return EXIT_OK
    with stage("experiment.run_experiment"):
        res = run_experiment(cfg, keep_records=False)
    for note in res.summary["result"]["warnings"]:
        log.warning(note)
    print(summary_text(res.summary), end="")
    return EXIT_OK


def cmd_oracle(args):
    cfg = _config(args)
    with stage("problem.build_problem"):
        p = build_problem(cfg.problem)
    with stage("oracle.solve_dual_centralized"):
        res = solve_dual_centralized(p, tol=cfg.oracle_tol, max_iters=cfg.oracle_max_iters)
    mu = np.asarray(res.mu_star)
    print(f"dual-supergradient f_star = {res.f_star:.12g}")
    print(f"mu_star = {' '.join(f'{v:.12g}' for v in mu)}")
    print(f"mu_star_inf_norm = {float(np.max(np.abs(mu))):.12g}")
    print(f"certified_gap = {res.certified_gap:.3e}")
    print(f"check_m_bound (M = {p.big_m:g}) = {str(check_m_bound(res, p.big_m)).lower()}")
    try:
        grid = solve_grid(p, points_per_dim=cfg.grid_points)
    except TooLarge as exc:
        print(f"grid oracle skipped: {exc}")
    else:
        if grid.feasible:
            print(f"grid f_star = {grid.f_star:.12g} (resolution {grid.certified_gap:.3e})")
        else:
            print("grid oracle: no feasible grid point")
    return EXIT_OK


def cmd_validate(args):
    cfg = _config(args)
    with stage("problem.build_problem"):
        p = build_problem(cfg.problem)
    lines = []
    sl = slater_check(p)
    if sl:
        lines.append(("PASS", f"Slater point found, coupling value max {float(np.max(sl.coupling_value)):.6g} < 0"))
    else:
        lines.append(("WARN", "no strictly feasible coupling point found (Slater condition unverified)"))
    if validate_stepsize(cfg.stepsize):
        lines.append(("PASS", f"step size c*(t+t0)^-a with a={cfg.stepsize.a:g} is diminishing"))
    else:
        lines.append(("WARN", f"step size exponent a={cfg.stepsize.a:g} outside (0.5, 1]"))
    try:
        g = build_graph(cfg.graph, p.n_agents)
    except ConnectivityFailure as exc:
        lines.append(("WARN", f"graph: {exc}"))
    else:
        if graphs.is_connected(g):
            lines.append(("PASS", f"graph connected ({g.n} nodes, {g.num_edges} edges)"))
        else:
            lines.append(("WARN", f"graph not connected ({g.n} nodes, {g.num_edges} edges)"))
    for status, msg in lines:
        print(f"{status:4s}  {msg}")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="TOML experiment config")
    common.add_argument("--seed", type=int, help="override problem and graph seed")
    common.add_argument("--iters", type=int, help="override the number of rounds")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--big-m", type=float, dest="big_m", help="override M")
    common.add_argument("--step-c", type=float, dest="step_c", help="override step-size scale c")
    common.add_argument("--step-a", type=float, dest="step_a", help="override step-size exponent a")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="relaxdual", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run the distributed algorithm")
    p_run.add_argument("--seeds", type=int, default=0, help="run this many consecutive seeds")
    p_run.set_defaults(func=cmd_run)
    sub.add_parser("oracle", parents=[common], help="centralized reference solutions").set_defaults(func=cmd_oracle)
    sub.add_parser("validate", parents=[common], help="check problem assumptions").set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except StageError as err:
        print(f"error [{err.stage}] {type(err.exc).__name__}: {err.exc}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
