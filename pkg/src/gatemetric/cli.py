"""Command-line interface: ``gatemetric {distance,fidelity,optimize,sweep,check}``.

Exit codes: 0 success, 2 unreadable or invalid input/config, 3 numerical
failure, 4 input operator not unitary. Convergence of an optimization is
reported in the output, not through the exit code.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from contextlib import contextmanager

import numpy as np

from .channels import (
    channel_fidelity_mmc,
    channel_fidelity_mms,
    fidelity_bounds_from_distance,
    fidelity_lower_bound,
    kraus_from_unitary,
)
from .checks import SUITES, run_checks
from .experiment import record_json, run_experiment, write_csv
from .io import ConfigError, dumps_matrix, load_config, read_matrix, resolve_workers
from .linalg import (
    CompositeDims,
    DimensionError,
    InvalidStateError,
    NotUnitaryError,
    NumericalError,
    check_density,
    check_unitary,
)
from .metrics import dist_hs, dist_hs_closed, dist_two_norm_bounds

log = logging.getLogger("gatemetric")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_NOT_UNITARY = 4


def _matrix_obj(m) -> dict:
    return json.loads(dumps_matrix(m))


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit(obj, path) -> None:
    with _sink(path) as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _dims(args) -> CompositeDims:
    return CompositeDims(*args.dims)


def cmd_distance(args) -> int:
    dims = _dims(args)
    u = check_unitary(read_matrix(args.u), dims)
    v = read_matrix(args.v)
    if v.shape == (dims.n_s, dims.n_s):
        v_s = check_unitary(v)
        res = dist_hs_closed(u, v_s, dims)
        v_full = np.kron(v_s, np.eye(dims.n_e))
        target = "system"
    else:
        v_full = check_unitary(v, dims)
        res = dist_hs(u, v_full, dims)
        target = "composite"
    bounds = dist_two_norm_bounds(u, v_full, dims)
    fid = fidelity_bounds_from_distance(res.value)
    _emit(
        {
            "target": target,
            "n_s": dims.n_s,
            "n_e": dims.n_e,
            "distance_hs": res.value,
            "optimal_phi": _matrix_obj(res.optimal_phi),
            "two_norm_lower": bounds.lower,
            "two_norm_upper": bounds.upper,
            "two_norm_converged": bounds.converged,
            "F_l": fid.lower,
            "F_u": fid.upper,
        },
        args.output,
    )
    return EXIT_OK


def cmd_fidelity(args) -> int:
    dims = _dims(args)
    u = check_unitary(read_matrix(args.u), dims)
    v_s = read_matrix(args.v_s)
    if v_s.shape != (dims.n_s, dims.n_s):
        raise DimensionError(f"system target must be {dims.n_s}x{dims.n_s}, got {v_s.shape}")
    v_s = check_unitary(v_s)
    rho_e = check_density(read_matrix(args.rho_e), dims.n_e, tol=1e-8)
    kraus = kraus_from_unitary(u, rho_e, dims)
    f_ms = channel_fidelity_mms(kraus, v_s)
    f_mc = channel_fidelity_mmc(u, v_s, dims)
    f_low, converged = fidelity_lower_bound(kraus, v_s)
    delta = dist_hs_closed(u, v_s, dims).value
    lo, hi = (1 - delta) ** 2, 1 - delta**2
    sandwich_ok = lo - 1e-9 <= f_mc <= hi + 1e-9
    if not sandwich_ok:
        log.error("distance-fidelity sandwich violated: %.12g <= %.12g <= %.12g fails", lo, f_mc, hi)
    _emit(
        {
            "F_ms": f_ms,
            "F_mc": f_mc,
            "F_pure_lower": f_low,
            "F_pure_lower_converged": converged,
            "kraus_operators": len(kraus),
            "completeness_residual": kraus.completeness_residual(),
            "distance_hs": delta,
            "sandwich_ok": sandwich_ok,
        },
        args.output,
    )
    return EXIT_OK


def _experiment(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, seed=args.seed, optimizer=dataclasses.replace(cfg.optimizer, seed=args.seed)
        )
    workers = resolve_workers(args.workers, cfg.workers)
    output = args.output if args.output is not None else cfg.output
    return cfg, workers, output


def cmd_optimize(args) -> int:
    cfg, workers, output = _experiment(args)
    rows = run_experiment(cfg, workers=workers)
    for rec, _ in rows:
        print(
            f"gamma={rec.gamma:g} distance={rec.distance:.6e} F_l={rec.F_l:.6f} F_u={rec.F_u:.6f} "
            f"iterations={rec.iterations} converged={rec.converged}",
            file=sys.stderr,
        )
    _emit([record_json(rec, res) for rec, res in rows], output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, workers, output = _experiment(args)
    rows = run_experiment(cfg, workers=workers)
    with _sink(output) as fh:
        write_csv([rec for rec, _ in rows], fh)
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(seed=args.seed or 0, names=args.suite)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status} {r.name}: {r.cases} cases, {r.detail} = {r.worst:.3e}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} suites passed")
    with _sink(args.output) as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK if passed == len(results) else 1


def _common_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags without defaults so values given
    # before the subcommand name are not overwritten
    default = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="random seed (overrides the config)")
    common.add_argument(
        "--workers", type=int, default=default, help="worker processes (default: $GATEMETRIC_WORKERS or core count)"
    )
    common.add_argument("--output", "-o", default=default, help="output file (default: stdout)")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="gatemetric",
        description="Environment-invariant gate distances, channel fidelities and optimal gate control.",
        parents=[_common_flags(suppress=False)],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distance", parents=[common], help="HS and two-norm distance between two unitaries")
    p.add_argument("u", help="composite unitary (matrix JSON)")
    p.add_argument("v", help="composite target, or a system-only target")
    p.add_argument("--dims", type=int, nargs=2, required=True, metavar=("N_S", "N_E"))
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("fidelity", parents=[common], help="channel fidelities of the induced system map")
    p.add_argument("u", help="composite unitary (matrix JSON)")
    p.add_argument("v_s", help="system target (matrix JSON)")
    p.add_argument("rho_e", help="initial environment state (matrix JSON)")
    p.add_argument("--dims", type=int, nargs=2, required=True, metavar=("N_S", "N_E"))
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("optimize", parents=[common], help="optimize a gate for each coupling in a config")
    p.add_argument("config")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common], help="coupling sweep, written as CSV")
    p.add_argument("config")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", parents=[common], help="run the built-in property suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only this suite (repeatable)")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NotUnitaryError as exc:
        print(f"error: input is not unitary: {exc}", file=sys.stderr)
        return EXIT_NOT_UNITARY
    except (ConfigError, DimensionError, InvalidStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
