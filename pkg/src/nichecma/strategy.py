"""Covariance-adapting evolution strategy core.

The generation loop is decomposed into small pure update rules over an
explicit parameter/state pair so that each rule can be tested in
isolation.  All randomness flows through an injected numpy ``Generator``;
a state is owned by exactly one run and never shared mutably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .validation import as_float_vector, as_square_matrix, check_finite, check_positive

__all__ = [
    "DEFAULT_BOUNDS",
    "CovarianceDegenerateError",
    "CmaParams",
    "EigenCache",
    "CmaState",
    "Candidate",
    "StepResult",
    "TerminationConfig",
    "derive_params",
    "expected_norm",
    "init_state",
    "sample_population",
    "update_mean",
    "update_path_sigma",
    "stall_indicator",
    "update_path_c",
    "update_covariance",
    "update_sigma",
    "repair_covariance",
    "step",
    "check_termination",
]

DEFAULT_BOUNDS = (-5.0, 5.0)

# Numeric guard rails for the adapted quantities.
SIGMA_MIN = 1e-300
SIGMA_MAX = 1e300
EIGEN_FLOOR_REL = 1e-14
CONDITION_CAP = 1e14
MAX_RESAMPLES = 10


class CovarianceDegenerateError(RuntimeError):
    """The covariance matrix cannot be decomposed (non-finite entries or a
    failed eigendecomposition).  The owning run should restart."""


@dataclass(frozen=True)
class CmaParams:
    """Immutable strategy constants for one problem dimension.

    Use :func:`derive_params` for the standard derivation; direct
    construction is validated but expects every field.
    """

    n: int
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_c: float
    c_sigma: float
    d_sigma: float
    c_1: float
    c_mu: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 < self.mu <= self.lam:
            raise ValueError("parent count must be in (0, population size]")
        w = as_float_vector(self.weights, self.mu, "weights")
        object.__setattr__(self, "weights", w)
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if np.any(np.diff(w) > 1e-15):
            raise ValueError("weights must be non-increasing")
        if abs(self.mu_eff * np.sum(w**2) - 1.0) > 1e-9:
            raise ValueError("mu_eff inconsistent with weights")
        for name in ("c_c", "c_sigma", "c_1", "c_mu"):
            val = getattr(self, name)
            if not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        if self.c_1 + self.c_mu > 1.0 + 1e-12:
            raise ValueError("c_1 + c_mu must not exceed 1")
        if self.d_sigma < 1.0:
            raise ValueError("d_sigma must be >= 1")


@dataclass
class EigenCache:
    """Eigendecomposition of the covariance, reused across generations."""

    basis: np.ndarray  # orthonormal eigenvectors, columns
    scale: np.ndarray  # sqrt of eigenvalues
    inv_sqrt: np.ndarray  # basis @ diag(1/scale) @ basis.T
    age: int = 0


@dataclass
class CmaState:
    """Evolving search state; single-writer, one run owns one state."""

    t: int
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    path_c: np.ndarray
    path_sigma: np.ndarray
    eigen: EigenCache
    cond_strikes: int = 0


@dataclass(frozen=True)
class Candidate:
    """One sampled solution; ``feasible_draws`` counts the redraws that were
    needed before bound handling resolved it."""

    x: np.ndarray
    fitness: float
    feasible_draws: int = 0


class StepResult(NamedTuple):
    """Outcome of one generation: the (mutated) state, the generation best,
    the evaluation count, and the raw evaluated population for callers that
    archive it."""

    state: "CmaState"
    best: Candidate
    evals_used: int
    points: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class TerminationConfig:
    """Per-restart stopping thresholds."""

    sigma_floor: float = 1e-12
    stagnation_window: int = 100
    stagnation_tol: float = 1e-12
    max_condition: float = CONDITION_CAP
    condition_strikes: int = 2

    @classmethod
    def for_dimension(cls, n: int) -> "TerminationConfig":
        return cls(stagnation_window=50 * n)


def derive_params(n: int, lambda_override: int | None = None) -> CmaParams:
    """Standard dimension-scaled strategy constants.

    The population defaults to ``10 * n`` (proportional to the dimension)
    with half of it used as parents, all equally weighted.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    lam = int(lambda_override) if lambda_override is not None else 10 * n
    if lam < 2:
        raise ValueError("population size must be >= 2")
    mu = lam // 2
    weights = np.full(mu, 1.0 / mu)
    mu_eff = float(mu)  # equal weights: 1 / sum(w^2) == mu exactly
    c_c = 4.0 / (n + 4.0)
    c_sigma = (2.0 + mu_eff) / (3.0 + n + mu_eff)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    return CmaParams(
        n=n,
        lam=lam,
        mu=mu,
        weights=weights,
        mu_eff=mu_eff,
        c_c=c_c,
        c_sigma=c_sigma,
        d_sigma=d_sigma,
        c_1=c_1,
        c_mu=c_mu,
    )


@lru_cache(maxsize=None)
def expected_norm(n: int) -> float:
    """Expected length of an n-dimensional standard normal vector,
    sqrt(2) * Gamma((n+1)/2) / Gamma(n/2), evaluated via log-gamma so it
    stays finite for large n."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return math.exp(0.5 * math.log(2.0) + math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


def init_state(
    params: CmaParams,
    mean: np.ndarray,
    sigma: float,
    cov: np.ndarray | None = None,
) -> CmaState:
    """Fresh state: zero evolution paths, identity covariance unless a
    starting covariance is supplied."""
    mean = as_float_vector(mean, params.n, "mean")
    check_finite(mean, "mean")
    sigma = check_positive(sigma, "sigma")
    n = params.n
    eye = np.eye(n)
    state = CmaState(
        t=0,
        mean=mean.copy(),
        sigma=sigma,
        cov=eye.copy(),
        path_c=np.zeros(n),
        path_sigma=np.zeros(n),
        eigen=EigenCache(basis=eye.copy(), scale=np.ones(n), inv_sqrt=eye.copy()),
    )
    if cov is not None:
        state.cov = as_square_matrix(cov, n, "cov").copy()
        _repair_state(state, params)
    return state


def _decompose(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not np.all(np.isfinite(cov)):
        raise CovarianceDegenerateError("covariance contains non-finite entries")
    sym = 0.5 * (cov + cov.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise CovarianceDegenerateError("eigendecomposition failed") from exc
    return eigvals, eigvecs


def repair_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and floor the spectrum so the condition number stays
    below ``CONDITION_CAP``.  Raises :class:`CovarianceDegenerateError` on
    non-finite input."""
    cov = as_square_matrix(cov, name="covariance")
    eigvals, eigvecs = _decompose(cov)
    top = float(eigvals[-1])
    if top <= 0:
        raise CovarianceDegenerateError("covariance has no positive eigenvalue")
    floored = np.maximum(eigvals, EIGEN_FLOOR_REL * top)
    repaired = (eigvecs * floored) @ eigvecs.T
    return 0.5 * (repaired + repaired.T)


def _eigen_max_age(params: CmaParams) -> int:
    # Amortization cadence; with desk-scale dimensions the per-step repair
    # keeps the cache fresh anyway.
    return max(1, int(1.0 / (10.0 * params.n * (params.c_1 + params.c_mu))))


def _repair_state(state: CmaState, params: CmaParams) -> None:
    """Repair ``state.cov`` in place, refresh the eigen cache, and track
    consecutive pre-repair condition violations."""
    eigvals, eigvecs = _decompose(state.cov)
    top = float(eigvals[-1])
    if top <= 0:
        raise CovarianceDegenerateError("covariance has no positive eigenvalue")
    bottom = float(eigvals[0])
    if bottom <= 0 or top / bottom >= CONDITION_CAP:
        state.cond_strikes += 1
    else:
        state.cond_strikes = 0
    floored = np.maximum(eigvals, EIGEN_FLOOR_REL * top)
    cov = (eigvecs * floored) @ eigvecs.T
    state.cov = 0.5 * (cov + cov.T)
    scale = np.sqrt(floored)
    state.eigen = EigenCache(
        basis=eigvecs,
        scale=scale,
        inv_sqrt=(eigvecs / scale) @ eigvecs.T,
        age=0,
    )


def _ensure_eigen(state: CmaState, params: CmaParams) -> EigenCache:
    if state.eigen is None or state.eigen.age > _eigen_max_age(params):
        _repair_state(state, params)
    return state.eigen


def _sample_matrix(
    state: CmaState,
    params: CmaParams,
    rng: np.random.Generator,
    bounds: tuple[float, float],
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = bounds
    try:
        cache = _ensure_eigen(state, params)
    except CovarianceDegenerateError:
        # One repair attempt before giving up.
        state.cov = repair_covariance(np.where(np.isfinite(state.cov), state.cov, 0.0))
        _repair_state(state, params)
        cache = state.eigen
    bd = cache.basis * cache.scale  # maps z ~ N(0, I) onto N(0, C)
    points = np.empty((params.lam, params.n))
    draws = np.zeros(params.lam, dtype=int)
    todo = np.arange(params.lam)
    for attempt in range(MAX_RESAMPLES + 1):
        z = rng.standard_normal((todo.size, params.n))
        cand = state.mean + state.sigma * (z @ bd.T)
        inside = ((cand >= lo) & (cand <= hi)).all(axis=1)
        points[todo[inside]] = cand[inside]
        draws[todo[inside]] = attempt
        if inside.all():
            return points, draws
        if attempt == MAX_RESAMPLES:
            left = todo[~inside]
            points[left] = np.clip(cand[~inside], lo, hi)
            draws[left] = attempt
            return points, draws
        todo = todo[~inside]
    return points, draws  # pragma: no cover


def sample_population(
    state: CmaState,
    params: CmaParams,
    rng: np.random.Generator,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
) -> list[Candidate]:
    """Draw the full population from N(mean, sigma^2 C).

    Out-of-bounds draws are resampled up to ``MAX_RESAMPLES`` times and
    then clamped coordinate-wise.  Fitness is left unevaluated (NaN).
    """
    points, draws = _sample_matrix(state, params, rng, bounds)
    return [
        Candidate(x=points[i], fitness=float("nan"), feasible_draws=int(draws[i]))
        for i in range(params.lam)
    ]


def update_mean(sorted_candidates: Sequence[Candidate], params: CmaParams) -> np.ndarray:
    """Weighted recombination of the best ``mu`` candidates (ascending
    fitness order expected)."""
    if len(sorted_candidates) < params.mu:
        raise ValueError(
            f"need at least {params.mu} candidates, got {len(sorted_candidates)}"
        )
    xs = np.stack([c.x for c in sorted_candidates[: params.mu]])
    return params.weights @ xs


def update_path_sigma(state: CmaState, new_mean: np.ndarray, params: CmaParams) -> np.ndarray:
    """Whitened-step cumulation used for step-size control."""
    step_vec = (as_float_vector(new_mean, params.n, "new_mean") - state.mean) / state.sigma
    check_finite(step_vec, "mean step")
    coeff = math.sqrt(params.c_sigma * (2.0 - params.c_sigma) * params.mu_eff)
    return (1.0 - params.c_sigma) * state.path_sigma + coeff * (state.eigen.inv_sqrt @ step_vec)


def stall_indicator(state: CmaState, params: CmaParams) -> int:
    """1 while the step path stays short enough for path cumulation to be
    trusted, 0 when it has grown anomalously long.

    Expects ``state.path_sigma`` already updated for the upcoming
    generation while ``state.t`` still holds the previous index.
    """
    n = params.n
    normalizer = math.sqrt(1.0 - (1.0 - params.c_sigma) ** (2 * (state.t + 1)))
    threshold = (1.5 + 1.0 / (n - 0.5)) * expected_norm(n)
    return 1 if np.linalg.norm(state.path_sigma) / normalizer < threshold else 0


def update_path_c(
    state: CmaState, new_mean: np.ndarray, h: int, params: CmaParams
) -> np.ndarray:
    """Evolution path for the covariance; the indicator gates the new step."""
    step_vec = (as_float_vector(new_mean, params.n, "new_mean") - state.mean) / state.sigma
    check_finite(step_vec, "mean step")
    coeff = math.sqrt(params.c_c * (2.0 - params.c_c) * params.mu_eff)
    return (1.0 - params.c_c) * state.path_c + h * coeff * step_vec


def update_covariance(
    state: CmaState,
    sorted_candidates: Sequence[Candidate],
    h: int,
    params: CmaParams,
) -> np.ndarray:
    """Rank-one plus rank-mu covariance update.

    Uses the pre-update mean and sigma still stored on ``state``; expects
    ``state.path_c`` already updated.  The stall correction keeps the decay
    balanced in generations where the indicator suppressed the path term.
    """
    ys = (
        np.stack([c.x for c in sorted_candidates[: params.mu]]) - state.mean
    ) / state.sigma
    rank_mu = (params.weights[:, None] * ys).T @ ys
    rank_one = np.outer(state.path_c, state.path_c)
    stall_fix = (1 - h) * params.c_c * (2.0 - params.c_c) * state.cov
    cov = (
        (1.0 - params.c_1 - params.c_mu) * state.cov
        + params.c_1 * (rank_one + stall_fix)
        + params.c_mu * rank_mu
    )
    return 0.5 * (cov + cov.T)


def update_sigma(state: CmaState, params: CmaParams) -> float:
    """Exponential step-size change from the path-length ratio."""
    ratio = np.linalg.norm(state.path_sigma) / expected_norm(params.n)
    sigma = state.sigma * math.exp((params.c_sigma / params.d_sigma) * (ratio - 1.0))
    return float(min(max(sigma, SIGMA_MIN), SIGMA_MAX))


def step(
    state: CmaState,
    params: CmaParams,
    evaluator: Callable[[np.ndarray], np.ndarray],
    rng: np.random.Generator,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
) -> StepResult:
    """One full generation: sample, evaluate, select, and adapt.

    ``evaluator`` receives the (lam, n) matrix of candidates and must
    return a length-lam array of finite fitness values (minimized).
    Consumes exactly ``params.lam`` evaluations.
    """
    points, draws = _sample_matrix(state, params, rng, bounds)
    values = np.asarray(evaluator(points), dtype=float)
    if values.shape != (params.lam,):
        raise ValueError(f"evaluator must return {params.lam} values, got {values.shape}")
    check_finite(values, "fitness values")

    order = np.argsort(values, kind="stable")
    top = [
        Candidate(x=points[j], fitness=float(values[j]), feasible_draws=int(draws[j]))
        for j in order[: params.mu]
    ]
    best = top[0]

    new_mean = update_mean(top, params)
    state.path_sigma = update_path_sigma(state, new_mean, params)
    h = stall_indicator(state, params)
    state.path_c = update_path_c(state, new_mean, h, params)
    state.cov = update_covariance(state, top, h, params)
    state.sigma = update_sigma(state, params)
    state.mean = new_mean
    _repair_state(state, params)
    state.t += 1
    return StepResult(state, best, params.lam, points, values)


def check_termination(
    state: CmaState,
    history: Sequence[float],
    limits: TerminationConfig,
) -> str | None:
    """Return the stop reason for this restart, or None to continue.

    ``history`` holds the best fitness seen up to each completed
    generation, most recent last.
    """
    if len(history) == 0:
        raise ValueError("history must hold at least one entry")
    if state.sigma < limits.sigma_floor:
        return "sigma-floor"
    if state.cond_strikes >= limits.condition_strikes:
        return "ill-conditioned"
    w = limits.stagnation_window
    if len(history) > w and history[-(w + 1)] - min(history[-w:]) < limits.stagnation_tol:
        return "stagnation"
    return None
