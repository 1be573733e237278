"""Suite orchestration: single runs, the full problem/dimension/instance
matrix, and CSV/trace emission."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .benchmarks import (
    MAX_HARDNESS,
    MIN_HARDNESS,
    MIN_SEPARATION,
    POSITION_WARP,
    ProblemSpec,
    instantiate_problem,
)
from .metrics import RunMetrics, epsilon_f, f1, match_peaks, precision_recall
from .niching import DEFAULT_SIGMA_W
from .solver import NichingCmaEs

__all__ = [
    "RunConfig",
    "RunRecord",
    "CSV_HEADER",
    "run_single",
    "suite_plan",
    "run_suite",
    "emit_csv",
    "read_csv",
    "emit_trace",
    "aggregate_records",
]

CSV_HEADER = (
    "problem_id,group,dim,instance,f_star,f_best,epsilon_f,n_true,n_reported,"
    "n_matched,precision,recall,f1,restarts,evals_used,wall_ms"
)


@dataclass(frozen=True)
class RunConfig:
    """Defaults for the full experimental protocol."""

    budget_multiplier: int = 50_000
    dims: tuple[int, ...] = (2, 5, 10, 20)
    instances: int = 15
    problems: tuple[int, ...] = tuple(range(1, 17))
    master_seed: int = 0
    sigma0: float = 2.0
    lambda_override: int | None = None
    archive_f_tol: float | None = None  # default: 1e-3 * (1 + |bias|)
    match_radius: float | None = None  # default: the problem's niching radius
    match_f_tol: float | None = None  # default: 1e-3 * (1 + |bias|)
    trace_every: int = 1
    sigma_w: float = DEFAULT_SIGMA_W
    min_hardness: float = MIN_HARDNESS
    max_hardness: float = MAX_HARDNESS
    min_separation: float = MIN_SEPARATION
    position_warp: float = POSITION_WARP

    def __post_init__(self):
        if self.budget_multiplier < 1:
            raise ValueError("budget_multiplier must be >= 1")
        if not self.dims:
            raise ValueError("dims must be non-empty")
        if self.instances < 1:
            raise ValueError("instances must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one optimization run, one CSV row."""

    problem_id: int
    group: str
    dim: int
    instance: int
    f_star: float
    f_best: float
    metrics: RunMetrics
    n_true: int
    n_reported: int
    n_matched: int
    restarts: int
    wall_ms: float
    trace_path: str | None = None
    error: str | None = None


def run_single(
    spec: ProblemSpec, config: RunConfig, trace_path: str | None = None
) -> RunRecord:
    """Instantiate the problem, run the budgeted search, score the archive."""
    t0 = time.perf_counter()
    problem = instantiate_problem(
        spec,
        config.master_seed,
        min_hardness=config.min_hardness,
        max_hardness=config.max_hardness,
        sigma_w=config.sigma_w,
        min_separation=config.min_separation,
        warp=config.position_warp,
    )
    est = NichingCmaEs(
        budget_multiplier=config.budget_multiplier,
        sigma0=config.sigma0,
        lambda_override=config.lambda_override,
        seed=(config.master_seed, spec.problem_id, spec.dim, spec.instance),
        archive_f_tol=config.archive_f_tol,
        trace_every=config.trace_every,
    ).fit(problem)

    radius = config.match_radius or problem.niche.niche_radius
    f_tol = config.match_f_tol or 1e-3 * (1.0 + abs(problem.bias))
    reported_points, reported_fitness = est.report_solutions()
    report = match_peaks(
        reported_points,
        reported_fitness,
        problem.niche.positions,
        problem.bias,
        radius,
        f_tol,
    )
    precision, recall = precision_recall(report)
    metrics = RunMetrics(
        epsilon_f=epsilon_f(est.best_fitness_, problem.bias),
        precision=precision,
        recall=recall,
        f1=f1(precision, recall),
        evals_used=est.n_evals_,
    )
    if trace_path is not None:
        emit_trace(est.trace_, trace_path)
    wall_ms = (time.perf_counter() - t0) * 1e3
    return RunRecord(
        problem_id=spec.problem_id,
        group=spec.group,
        dim=spec.dim,
        instance=spec.instance,
        f_star=problem.bias,
        f_best=est.best_fitness_,
        metrics=metrics,
        n_true=report.n_true,
        n_reported=report.n_reported,
        n_matched=report.n_matched,
        restarts=est.n_restarts_,
        wall_ms=wall_ms,
        trace_path=trace_path,
    )


def suite_plan(config: RunConfig) -> list[ProblemSpec]:
    """Deterministic run order: problem, then dimension, then instance."""
    return [
        ProblemSpec.from_id(pid, dim, inst)
        for pid in config.problems
        for dim in config.dims
        for inst in range(1, config.instances + 1)
    ]


def _run_entry(args: tuple[ProblemSpec, RunConfig]) -> RunRecord:
    spec, config = args
    try:
        return run_single(spec, config)
    except Exception as exc:  # per-row failure must not kill the suite
        zero = RunMetrics(
            epsilon_f=float("nan"), precision=0.0, recall=0.0, f1=0.0, evals_used=0
        )
        return RunRecord(
            problem_id=spec.problem_id,
            group=spec.group,
            dim=spec.dim,
            instance=spec.instance,
            f_star=spec.paper_f_star,
            f_best=float("nan"),
            metrics=zero,
            n_true=spec.n_minima,
            n_reported=0,
            n_matched=0,
            restarts=0,
            wall_ms=0.0,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_suite(config: RunConfig, jobs: int = 1) -> list[RunRecord]:
    """Execute the full matrix; per-run errors become error records.

    Results are identical (wall time aside) whether run serially or with
    several worker processes, since every run derives its own streams.
    """
    plan = [(spec, config) for spec in suite_plan(config)]
    if jobs <= 1:
        return [_run_entry(entry) for entry in plan]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_entry, plan))


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def emit_csv(records, path=None) -> str:
    """Serialize records in the long-form row schema; 17 significant digits
    keep the floats bit-exact through a round-trip."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in records:
        m = r.metrics
        row = [
            str(r.problem_id),
            r.group,
            str(r.dim),
            str(r.instance),
            _fmt(r.f_star),
            _fmt(r.f_best),
            _fmt(m.epsilon_f),
            str(r.n_true),
            str(r.n_reported),
            str(r.n_matched),
            _fmt(m.precision),
            _fmt(m.recall),
            _fmt(m.f1),
            str(r.restarts),
            str(m.evals_used),
            _fmt(r.wall_ms),
        ]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_csv(source) -> list[RunRecord]:
    """Parse a CSV produced by :func:`emit_csv` (path or text)."""
    text = source
    if "\n" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(str(text)))
    records = []
    for row in reader:
        metrics = RunMetrics(
            epsilon_f=float(row["epsilon_f"]),
            precision=float(row["precision"]),
            recall=float(row["recall"]),
            f1=float(row["f1"]),
            evals_used=int(row["evals_used"]),
        )
        records.append(
            RunRecord(
                problem_id=int(row["problem_id"]),
                group=row["group"],
                dim=int(row["dim"]),
                instance=int(row["instance"]),
                f_star=float(row["f_star"]),
                f_best=float(row["f_best"]),
                metrics=metrics,
                n_true=int(row["n_true"]),
                n_reported=int(row["n_reported"]),
                n_matched=int(row["n_matched"]),
                restarts=int(row["restarts"]),
                wall_ms=float(row["wall_ms"]),
            )
        )
    return records


def emit_trace(trace_rows, path) -> None:
    """Tab-separated trace: generation, evals, best_f, sigma, restart."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for gen, evals, best_f, sigma, restart in trace_rows:
            fh.write(f"{gen}\t{evals}\t{_fmt(best_f)}\t{_fmt(sigma)}\t{restart}\n")


def aggregate_records(records) -> dict:
    """Per-(problem, dim) means of the accuracy gap and F1, plus the
    overall aggregate score."""
    from .metrics import overall_score

    by_key: dict[tuple[int, int], list[RunRecord]] = {}
    for r in records:
        by_key.setdefault((r.problem_id, r.dim), []).append(r)
    table = {
        key: {
            "mean_epsilon_f": float(np.mean([r.metrics.epsilon_f for r in rows])),
            "mean_f1": float(np.mean([r.metrics.f1 for r in rows])),
            "runs": len(rows),
        }
        for key, rows in sorted(by_key.items())
    }
    return {
        "cells": table,
        "overall_score": overall_score([r.metrics for r in records]),
    }
