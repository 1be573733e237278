"""Budgeted multi-restart driver around the strategy core, with an archive
of niche-separated solutions.  The driver is an sklearn-style estimator so
runs compose with the wider ecosystem (``get_params``, ``clone``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import strategy
from .benchmarks import BOUNDS, GeneratedProblem, derive_rng
from .strategy import TerminationConfig, derive_params, init_state, step

__all__ = ["Archive", "ArchiveEntry", "NichingCmaEs"]

# Basin-merge scale used when selecting reported solutions: true minima are
# never closer than twice the niche radius, so merging below that threshold
# collapses same-basin duplicates without ever fusing two distinct minima.
REPORT_MERGE_FACTOR = 1.9

# Restarts stop refining well below the matching tolerances; pushing sigma
# to machine scale buys nothing for detection and starves exploration.
RESTART_SIGMA_FLOOR = 1e-6


@dataclass
class ArchiveEntry:
    point: np.ndarray
    fitness: float
    eval_stamp: int
    seed_count: int = 0  # restarts warm-started from this entry


class Archive:
    """Niche-deduplicated store of the best solutions seen in a run.

    Entries stay pairwise farther apart than the niche radius: a candidate
    landing inside an existing entry's niche replaces it only if better.
    Entries far worse than the incumbent best are dropped lazily.
    """

    def __init__(self, radius: float, f_tol: float, prune_factor: float = 10.0):
        if radius <= 0 or f_tol <= 0:
            raise ValueError("radius and f_tol must be positive")
        self.radius = radius
        self.f_tol = f_tol
        self.prune_factor = prune_factor
        self.entries: list[ArchiveEntry] = []
        self._points = np.empty((0, 0))
        self._fitness = np.empty(0)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def best(self) -> ArchiveEntry | None:
        if not self.entries:
            return None
        return self.entries[int(np.argmin(self._fitness))]

    def _rebuild(self) -> None:
        if self.entries:
            self._points = np.stack([e.point for e in self.entries])
            self._fitness = np.array([e.fitness for e in self.entries])
        else:
            self._points = np.empty((0, 0))
            self._fitness = np.empty(0)

    def insert(self, point: np.ndarray, fitness: float, eval_stamp: int) -> bool:
        """Offer one candidate; returns True if the archive changed."""
        fitness = float(fitness)
        point = np.asarray(point, dtype=float)
        if not np.isfinite(fitness) or not np.all(np.isfinite(point)):
            raise ValueError("archive candidates must be finite")
        if self.entries:
            best_f = float(self._fitness.min())
            if fitness > best_f + self.prune_factor * self.f_tol:
                return False
            dists = np.linalg.norm(self._points - point, axis=1)
            j = int(np.argmin(dists))
            if dists[j] <= self.radius:
                if fitness < self.entries[j].fitness:
                    self.entries[j] = ArchiveEntry(
                        point.copy(), fitness, eval_stamp,
                        seed_count=self.entries[j].seed_count,
                    )
                    self._points[j] = point
                    self._fitness[j] = fitness
                    self._maybe_prune()
                    return True
                return False
        self.entries.append(ArchiveEntry(point.copy(), fitness, eval_stamp))
        self._rebuild()
        self._maybe_prune()
        return True

    def _maybe_prune(self) -> None:
        cutoff = float(self._fitness.min()) + self.prune_factor * self.f_tol
        if np.any(self._fitness > cutoff):
            self.entries = [e for e in self.entries if e.fitness <= cutoff]
            self._rebuild()

    def offer_batch(self, points: np.ndarray, values: np.ndarray, eval_stamp: int) -> None:
        """Offer a full generation, cheap-rejecting hopeless candidates."""
        values = np.asarray(values, dtype=float)
        if self.entries:
            cutoff = float(self._fitness.min()) + self.prune_factor * self.f_tol
            keep = values <= cutoff
            points, values = points[keep], values[keep]
        for j in np.argsort(values, kind="stable"):
            self.insert(points[j], values[j], eval_stamp)

    def points(self) -> np.ndarray:
        return self._points.copy()

    def fitness(self) -> np.ndarray:
        return self._fitness.copy()

    def select_restart_seed(self, worse_than: float | None = None) -> ArchiveEntry:
        """Entry to warm-start from: least-seeded first, better fitness as
        tie-break, optionally restricted to entries above a fitness bar
        (unrefined niche markers)."""
        if not self.entries:
            raise ValueError("archive is empty")
        pool = self.entries
        if worse_than is not None:
            marked = [e for e in pool if e.fitness > worse_than]
            if marked:
                pool = marked
        entry = min(pool, key=lambda e: (e.seed_count, e.fitness))
        entry.seed_count += 1
        return entry

    def near_best(
        self, tolerance: float, merge_radius: float | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Entries within ``tolerance`` of the best, basin-merged: walking
        in fitness order, an entry within ``merge_radius`` of an already
        selected one is treated as the same basin and dropped."""
        if not self.entries:
            return np.empty((0, 0)), np.empty(0)
        if merge_radius is None:
            merge_radius = REPORT_MERGE_FACTOR * self.radius
        keep = self._fitness <= float(self._fitness.min()) + tolerance
        pts, fs = self._points[keep], self._fitness[keep]
        selected: list[int] = []
        for j in np.argsort(fs, kind="stable"):
            if all(np.linalg.norm(pts[j] - pts[i]) > merge_radius for i in selected):
                selected.append(int(j))
        return pts[selected], fs[selected]


class NichingCmaEs(BaseEstimator):
    """Multi-restart covariance-adapting search over a multimodal problem.

    The evaluation budget is ``budget_multiplier * dim`` and is never
    exceeded; a restart stops early when the remaining budget cannot cover
    one full generation.  Restarts rotate through three roles:

    * global sweeps from a uniform start at the configured step size,
    * local exploration from a uniform start at niche scale, and
    * refinement seeded at archived markers of not-yet-refined niches.

    A restart that settles inside an already-refined niche without beating
    it is cut short, so duplicated basins cost little budget.

    Parameters
    ----------
    budget_multiplier:
        Evaluations allowed per problem dimension.
    sigma0:
        Step size of global restarts; local phases use the niche scale,
        capped by this value.
    lambda_override:
        Population size; defaults to 10 * dim when None.
    seed:
        Integer or tuple of integers; restart r draws its stream from the
        entropy tuple ``(*seed, r)``.
    archive_f_tol:
        Fitness tolerance of the archive and of reported solutions;
        defaults to 1e-3 * (1 + |bias|).
    trace_every:
        Generations between recorded trace rows.

    Attributes (after ``fit``)
    --------------------------
    archive_ : Archive of niche-separated solutions.
    best_x_, best_fitness_ : incumbent optimum.
    n_evals_, n_restarts_, n_generations_ : accounting.
    trace_ : list of (generation, evals, best_f, sigma, restart) rows.
    """

    def __init__(
        self,
        budget_multiplier: int = 50_000,
        sigma0: float = 2.0,
        lambda_override: int | None = None,
        seed=0,
        archive_f_tol: float | None = None,
        trace_every: int = 1,
    ):
        self.budget_multiplier = budget_multiplier
        self.sigma0 = sigma0
        self.lambda_override = lambda_override
        self.seed = seed
        self.archive_f_tol = archive_f_tol
        self.trace_every = trace_every

    def _seed_tuple(self) -> tuple[int, ...]:
        if isinstance(self.seed, (tuple, list)):
            return tuple(int(s) for s in self.seed)
        return (int(self.seed),)

    def _restart_start(
        self,
        restart: int,
        archive: Archive,
        best_f: float,
        f_tol: float,
        rng: np.random.Generator,
        n: int,
    ) -> tuple[np.ndarray, float]:
        lo, hi = BOUNDS
        radius = archive.radius
        explore_sigma = min(self.sigma0, max(1.5 * radius, 0.3))
        if restart == 0 or len(archive) == 0 or restart % 6 == 0:
            return rng.uniform(lo, hi, n), self.sigma0
        if restart % 2 == 1:
            return rng.uniform(lo, hi, n), explore_sigma
        entry = archive.select_restart_seed(worse_than=best_f + f_tol)
        if entry.fitness > best_f + f_tol:
            jitter = 0.5 * radius * rng.standard_normal(n)
            mean0 = np.clip(entry.point + jitter, lo, hi)
            return mean0, min(self.sigma0, max(radius, 0.1))
        # No unrefined markers left; keep exploring.
        return rng.uniform(lo, hi, n), explore_sigma

    @staticmethod
    def _settled_in_refined_niche(
        state, archive: Archive, best_f: float, f_tol: float, restart_best: float
    ) -> bool:
        if state.sigma >= archive.radius or not len(archive):
            return False
        good = archive._fitness <= best_f + f_tol
        if not good.any():
            return False
        dists = np.linalg.norm(archive._points[good] - state.mean, axis=1)
        j = int(np.argmin(dists))
        return bool(
            dists[j] <= archive.radius
            and restart_best >= archive._fitness[good][j] - 1e-12
        )

    def fit(self, problem: GeneratedProblem, y=None) -> "NichingCmaEs":
        """Run the full budgeted search on one generated problem."""
        if self.budget_multiplier < 1:
            raise ValueError("budget_multiplier must be >= 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")
        n = problem.dim
        budget = int(self.budget_multiplier) * n
        evaluate = problem.evaluator()
        params = derive_params(n, self.lambda_override)
        limits = TerminationConfig(
            sigma_floor=RESTART_SIGMA_FLOOR, stagnation_window=50 * n
        )
        f_tol = (
            float(self.archive_f_tol)
            if self.archive_f_tol is not None
            else 1e-3 * (1.0 + abs(problem.bias))
        )
        archive = Archive(radius=problem.niche.niche_radius, f_tol=f_tol)

        evals = 0
        generation = 0
        restart = 0
        best_f = np.inf
        best_x = None
        sigma_last = self.sigma0
        trace: list[tuple[int, int, float, float, int]] = []
        seed_base = self._seed_tuple()

        while budget - evals >= params.lam:
            rng = derive_rng(*seed_base, restart)
            mean0, sigma0 = self._restart_start(restart, archive, best_f, f_tol, rng, n)
            state = init_state(params, mean0, sigma0)
            history: list[float] = []
            restart_best = np.inf
            while budget - evals >= params.lam:
                try:
                    result = step(state, params, evaluate, rng, bounds=BOUNDS)
                except strategy.CovarianceDegenerateError:
                    break
                evals += result.evals_used
                archive.offer_batch(result.points, result.values, evals)
                if result.best.fitness < restart_best:
                    restart_best = result.best.fitness
                if restart_best < best_f:
                    best_f = restart_best
                    best_x = result.best.x.copy()
                history.append(restart_best)
                if generation % self.trace_every == 0:
                    trace.append((generation, evals, best_f, state.sigma, restart))
                generation += 1
                sigma_last = state.sigma
                if strategy.check_termination(state, history, limits) is not None:
                    break
                if self._settled_in_refined_niche(
                    state, archive, best_f, f_tol, restart_best
                ):
                    break
            restart += 1

        if generation > 0 and (not trace or trace[-1][1] != evals):
            trace.append((generation - 1, evals, best_f, sigma_last, restart - 1))

        self.archive_ = archive
        self.best_x_ = best_x
        self.best_fitness_ = float(best_f)
        self.n_evals_ = evals
        self.n_restarts_ = restart
        self.n_generations_ = generation
        self.trace_ = trace
        return self

    def report_solutions(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct near-optimal solutions of the fitted run: archive
        entries within the fitness tolerance of the best, basin-merged."""
        if not hasattr(self, "archive_"):
            raise ValueError("call fit before report_solutions")
        f_tol = (
            float(self.archive_f_tol)
            if self.archive_f_tol is not None
            else self.archive_.f_tol
        )
        return self.archive_.near_best(f_tol)
