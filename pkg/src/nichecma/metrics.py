"""Run evaluation: accuracy gap, peak matching, precision/recall/F1, and
the aggregate score."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "DetectionReport",
    "RunMetrics",
    "epsilon_f",
    "match_peaks",
    "precision_recall",
    "f1",
    "overall_score",
]


@dataclass(frozen=True)
class DetectionReport:
    """One-to-one matching between reported solutions and true minima.

    ``matched`` holds (true index, reported index, distance) triples; no
    index appears twice on either side.
    """

    reported_points: np.ndarray  # (m, n)
    reported_fitness: np.ndarray  # (m,)
    matched: tuple[tuple[int, int, float], ...]
    n_true: int

    @property
    def n_reported(self) -> int:
        return self.reported_points.shape[0]

    @property
    def n_matched(self) -> int:
        return len(self.matched)


@dataclass(frozen=True)
class RunMetrics:
    """Scalar outcome of one optimization run."""

    epsilon_f: float
    precision: float
    recall: float
    f1: float
    evals_used: int


def epsilon_f(f_best: float, f_star: float) -> float:
    """Accuracy gap between the best found value and the known optimum."""
    f_best, f_star = float(f_best), float(f_star)
    if not (np.isfinite(f_best) and np.isfinite(f_star)):
        raise ValueError("fitness values must be finite")
    return f_best - f_star


def match_peaks(
    reported_points,
    reported_fitness,
    true_minima,
    bias: float,
    radius: float,
    f_tol: float,
) -> DetectionReport:
    """Greedily match reported solutions to true minima.

    Candidate pairs need distance <= radius and fitness within ``f_tol``
    of the bias; pairs are accepted in ascending-distance order, each side
    at most once.
    """
    if radius <= 0:
        raise ValueError("match radius must be positive")
    true_minima = np.atleast_2d(np.asarray(true_minima, dtype=float))
    pts = np.asarray(reported_points, dtype=float)
    if pts.size == 0:
        pts = np.empty((0, true_minima.shape[1]))
    pts = np.atleast_2d(pts)
    fit = np.asarray(reported_fitness, dtype=float).ravel()
    if fit.shape[0] != pts.shape[0]:
        raise ValueError("one fitness value per reported point required")

    ok_fit = np.abs(fit - bias) <= f_tol
    dists = cdist(true_minima, pts) if pts.shape[0] else np.empty((true_minima.shape[0], 0))
    ti, ri = np.nonzero((dists <= radius) & ok_fit[None, :])
    order = np.argsort(dists[ti, ri], kind="stable")

    matched: list[tuple[int, int, float]] = []
    used_true: set[int] = set()
    used_rep: set[int] = set()
    for idx in order:
        t, r = int(ti[idx]), int(ri[idx])
        if t in used_true or r in used_rep:
            continue
        used_true.add(t)
        used_rep.add(r)
        matched.append((t, r, float(dists[t, r])))
    return DetectionReport(
        reported_points=pts,
        reported_fitness=fit,
        matched=tuple(matched),
        n_true=true_minima.shape[0],
    )


def precision_recall(report: DetectionReport) -> tuple[float, float]:
    """Matched fraction of the reported list, and of the true minima.

    An empty reported list counts as precision 1 (nothing wrongly
    reported) with recall 0.
    """
    if report.n_true < 1:
        raise ValueError("need at least one true minimum")
    precision = 1.0 if report.n_reported == 0 else report.n_matched / report.n_reported
    recall = report.n_matched / report.n_true
    return precision, recall


def f1(precision: float, recall: float) -> float:
    """Harmonic mean; zero when both inputs are zero."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ValueError("precision and recall must lie in [0, 1]")
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def overall_score(runs: Sequence[RunMetrics]) -> float:
    """Mean of F1 damped by the positive part of the accuracy gap.

    Stand-in aggregate: monotone increasing in F1 and non-increasing in
    each run's epsilon_f; not a canonical competition formula.
    """
    if len(runs) == 0:
        raise ValueError("cannot score an empty run list")
    return float(
        np.mean([r.f1 / (1.0 + max(0.0, r.epsilon_f)) for r in runs])
    )
