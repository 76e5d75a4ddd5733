"""Experiment driver shared by the ``optimize`` and ``sweep`` commands.

Work items are ``(gamma, restart)`` pairs. They run independently, possibly
in worker processes, and are merged in key order, so the results do not
depend on the worker count.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .control import OptimizationResult, best_of, run_restart
from .dynamics import propagate
from .io import ExperimentConfig
from .metrics import dist_two_norm_bounds

log = logging.getLogger(__name__)

CSV_COLUMNS = ("gamma", "distance", "F_l", "F_u", "F2_upper", "iterations", "converged", "seed", "wall_time_s")


@dataclass(frozen=True)
class ResultRecord:
    """Summary of the best restart at one coupling value.

    ``F2_upper`` is ``(1 - b)^2`` with ``b`` the upper bound on the two-norm
    distance; ``wall_time_s`` sums the run times of all restarts at this ``gamma``.
    """

    gamma: float
    distance: float
    F_l: float
    F_u: float
    F2_upper: float | None
    iterations: int
    converged: bool
    seed: int
    wall_time_s: float
    objective: float = float("nan")
    restart: int = 0

    def csv_row(self) -> dict:
        row = asdict(self)
        return {k: row[k] for k in CSV_COLUMNS}


def _job(args) -> OptimizationResult:
    cfg, gamma, restart = args
    return run_restart(cfg.system(gamma), cfg.objective, cfg.optimizer, restart)


def two_norm_fidelity(cfg: ExperimentConfig, gamma: float, result: OptimizationResult) -> float:
    sys = cfg.system(gamma)
    u = propagate(sys, result.best_control).final
    v = cfg.objective.full_target(sys.dims)
    upper = dist_two_norm_bounds(u, v, sys.dims).upper
    return float((1.0 - min(upper, 1.0)) ** 2)


def run_experiment(
    cfg: ExperimentConfig,
    workers: int = 1,
    gammas=None,
    with_two_norm: bool = True,
) -> list[tuple[ResultRecord, OptimizationResult]]:
    """Optimize at every coupling value; returns ``(record, best result)`` in ``gamma`` order."""
    gammas = tuple(cfg.gamma_list if gammas is None else gammas)
    if not gammas:
        raise ValueError("no coupling values to run")
    restarts = max(cfg.optimizer.restarts, 1)
    keys = [(i, r) for i in range(len(gammas)) for r in range(restarts)]
    jobs = [(cfg, gammas[i], r) for i, r in keys]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]

    by_gamma: dict[int, list] = {}
    for (i, _), res in zip(keys, results):
        by_gamma.setdefault(i, []).append(res)
    out = []
    for i, gamma in enumerate(gammas):
        group = by_gamma[i]
        best = best_of(group)
        f2 = two_norm_fidelity(cfg, gamma, best) if with_two_norm else None
        rec = ResultRecord(
            gamma=float(gamma),
            distance=best.distance,
            F_l=best.fidelity_lower,
            F_u=best.fidelity_upper,
            F2_upper=f2,
            iterations=best.iterations,
            converged=best.converged,
            seed=cfg.seed,
            wall_time_s=float(sum(r.wall_time_s for r in group)),
            objective=best.objective,
            restart=best.restart,
        )
        log.info("gamma=%g distance=%.3e restart=%d", gamma, rec.distance, rec.restart)
        out.append((rec, best))
    return out


def write_csv(records, fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = rec.csv_row()
        for key in ("gamma", "distance", "F_l", "F_u", "F2_upper", "wall_time_s"):
            if row[key] is not None:
                row[key] = repr(float(row[key]))
        writer.writerow(row)


def record_json(rec: ResultRecord, result: OptimizationResult) -> dict:
    d = asdict(rec)
    d["t_f"] = result.best_control.t_f
    d["control"] = [float(c) for c in np.asarray(result.best_control.samples)]
    return d
