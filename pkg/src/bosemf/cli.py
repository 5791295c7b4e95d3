"""Command-line entry point ``bosemf``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .counting import pk_distribution, write_counting_csv
from .experiment import (NumericalFailure, ResultSink, initial_datum, run_points, sweep_eps, sweep_n,
                         theorem_l_pipeline, windowed_datum, write_metadata)
from .fock import write_fock_vector
from .nls import NlsDivergence, nls_evolve, s0_norm, write_trajectory_csv
from .observables import rdm1, write_density_matrix
from .propagator import PropagatorError
from .verification import SUITES, run_verification

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("bosemf")


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # shared by the main parser and every subcommand so flags may come before or after it
    default = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=default, help="YAML configuration file")
    p.add_argument("--out", type=Path, default=default, help="output directory (overrides output_dir)")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="parallel sweep points")
    p.add_argument("--seed", type=int, default=default, help="seed (overrides the configured seed)")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bosemf", parents=[_global_options(False)],
                                     description="Mean-field dynamics of 1D bosons against the cubic NLS.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = [_global_options(True)]
    sub.add_parser("nls-run", parents=common, help="NLS trajectory of the configured datum")
    sub.add_parser("manybody-run", parents=common, help="many-body vs NLS comparison for each N")
    sub.add_parser("sweep-n", parents=common, help="N sweep with fitted convergence orders")
    sub.add_parser("sweep-eps", parents=common, help="eps sweep at fixed N")
    sub.add_parser("theorem-l", parents=common, help="rough datum with (log N)^eta mollification")
    v = sub.add_parser("verify", parents=common, help="run the self-verification suites")
    v.add_argument("--tolerance", type=float, default=None, help="override every suite tolerance")
    v.add_argument("--suite", action="append", default=None, help="run only this suite (repeatable)")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    return cfg.replace(**changes) if changes else cfg


def _out(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_nls_run(cfg, args) -> int:
    out = _out(cfg)
    start = time.perf_counter()
    traj = nls_evolve(initial_datum(cfg), cfg.kappa, cfg.t_final, cfg.dt, cfg.sample_every)
    write_trajectory_csv(traj, out / "nls_trajectory.csv")
    write_metadata(out / "nls_run.json", cfg, {
        "kind": "nls-run", "mass_drift": traj.mass_drift(), "energy_drift": traj.energy_drift(),
        "strichartz_s0": s0_norm(traj), "wall_seconds": time.perf_counter() - start})
    print(f"mass drift {traj.mass_drift():.3e}, energy drift {traj.energy_drift():.3e}")
    return EXIT_OK


def cmd_manybody_run(cfg, args) -> int:
    out = _out(cfg)
    start = time.perf_counter()
    sink = ResultSink(out / "manybody.csv", cfg, "manybody-run")
    points = [(int(N), cfg.eps_for(int(N))) for N in sorted(cfg.n_list)]

    def snapshot(res):
        N, final = res.N, res.final_state
        write_fock_vector(final, out / f"fock_N{N}_final.bin")
        write_density_matrix(rdm1(final), out / f"rdm1_N{N}_final.bin")
        phi_t = nls_evolve(windowed_datum(initial_datum(cfg), final.basis.modes), cfg.kappa,
                           cfg.t_final, cfg.dt, cfg.sample_every).final()
        write_counting_csv(pk_distribution(final, phi_t), out / f"counting_N{N}_final.csv")

    status = run_points(cfg, points, sink, args.workers, on_result=snapshot)
    write_metadata(out / "manybody.json", cfg, {"kind": "manybody-run",
                                                "wall_seconds": time.perf_counter() - start, **status})
    return _status_code(status)


def _status_code(status) -> int:
    for key, err in status["failures"].items():
        print(f"FAILED {key}: {err}", file=sys.stderr)
    return EXIT_NUMERICAL if status["failures"] else EXIT_OK


def cmd_sweep_n(cfg, args) -> int:
    res = sweep_n(cfg, workers=args.workers)
    for f in res["fits"]:
        slope = "n/a" if f.slope is None else f"{f.slope:.4f}"
        print(f"{f.observable:<14s} order {slope:>8s}  monotone {f.monotone_decreasing}  {f.note}")
    return _status_code(res)


def cmd_sweep_eps(cfg, args) -> int:
    res = sweep_eps(cfg, workers=args.workers)
    for s in res["summary"]:
        order = "n/a" if s["eps_order"] is None else f"{s['eps_order']:.4f}"
        print(f"N={s['N']:<3d} {s['observable']:<14s} eps-order {order:>8s}  {s['note']}")
    return _status_code(res)


def cmd_theorem_l(cfg, args) -> int:
    res = theorem_l_pipeline(cfg)
    print(f"{len(res['rows'])} rows written")
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    unknown = set(args.suite or ()) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites {sorted(unknown)}; choose from {sorted(SUITES)}")
    results = run_verification(cfg.seed, args.tolerance, args.suite)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "nls-run": cmd_nls_run,
    "manybody-run": cmd_manybody_run,
    "sweep-n": cmd_sweep_n,
    "sweep-eps": cmd_sweep_eps,
    "theorem-l": cmd_theorem_l,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("configuration error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, PropagatorError, NlsDivergence, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
