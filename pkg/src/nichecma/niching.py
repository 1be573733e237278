"""Proximity-weighted aggregation of several global minima into one
evaluable objective, plus the niche geometry it relies on."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .validation import as_float_vector, check_finite, check_positive

__all__ = [
    "DEFAULT_SIGMA_W",
    "NicheSet",
    "niching_radius",
    "niche_weights",
    "composite_fitness",
    "hardness",
]

# Kernel width as a fraction of the niching radius.  Narrow enough that the
# weight mass a minimum receives from its closest neighbour (at twice the
# radius, by construction) cannot lift the objective value at a minimum
# measurably above the bias, even for the steepest base functions.
DEFAULT_SIGMA_W = 0.35

ROTATION_TOL = 1e-10


@dataclass(frozen=True)
class NicheSet:
    """Immutable multimodal landscape: minima positions with per-minimum
    difficulty, rotation, and base function, plus the niche scale.

    ``base_fns`` holds one identifier per minimum; evaluation is delegated
    to a caller-supplied base evaluator so the geometry stays independent
    of any particular function catalogue.
    """

    positions: np.ndarray  # (k, n)
    hardness: np.ndarray  # (k,)
    rotations: np.ndarray  # (k, n, n)
    base_fns: tuple[str, ...]
    niche_radius: float
    bias: float
    sigma_w: float = DEFAULT_SIGMA_W

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2:
            raise ValueError("positions must be a (k, n) array")
        k, n = pos.shape
        hard = as_float_vector(self.hardness, k, "hardness")
        rot = np.asarray(self.rotations, dtype=float)
        if rot.shape != (k, n, n):
            raise ValueError(f"rotations must have shape ({k}, {n}, {n}), got {rot.shape}")
        if len(self.base_fns) != k:
            raise ValueError("need one base function id per minimum")
        check_finite(pos, "positions")
        check_finite(hard, "hardness")
        check_positive(self.niche_radius, "niche_radius")
        check_positive(self.sigma_w, "sigma_w")
        eye = np.eye(n)
        for i in range(k):
            if np.abs(rot[i].T @ rot[i] - eye).max() > ROTATION_TOL:
                raise ValueError(f"rotation {i} is not orthogonal")
        if k >= 2:
            min_dist = pdist(pos).min()
            if min_dist < 2.0 * self.niche_radius - 1e-9:
                raise ValueError("positions closer than twice the niching radius")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "hardness", hard)
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "base_fns", tuple(self.base_fns))

    @property
    def n_minima(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


def niching_radius(positions: np.ndarray) -> float:
    """Half the minimum pairwise distance between minima."""
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[0] < 2:
        raise ValueError("need at least two positions to define a niching radius")
    min_dist = float(pdist(pos).min())
    if min_dist == 0.0:
        raise ValueError("duplicate positions give a zero niching radius")
    return 0.5 * min_dist


def _weight_matrix(points: np.ndarray, niche: NicheSet) -> np.ndarray:
    """Normalized proximity weights for a (m, n) batch of points.

    The squared-distance exponents are shifted by their row minimum before
    exponentiation, so normalization stays exact even where every raw
    kernel value underflows; the nearest minimum then carries the mass.
    """
    diff = points[:, None, :] - niche.positions[None, :, :]
    d2 = np.einsum("mkn,mkn->mk", diff, diff)
    width = niche.sigma_w * niche.niche_radius
    expo = d2 / (width * width)
    expo -= expo.min(axis=1, keepdims=True)
    raw = np.exp(-expo)
    return raw / raw.sum(axis=1, keepdims=True)


def niche_weights(x: np.ndarray, niche: NicheSet) -> np.ndarray:
    """Per-minimum weights for one point; non-negative and summing to 1."""
    x = as_float_vector(x, niche.dim, "x")
    return _weight_matrix(x[None, :], niche)[0]


def composite_fitness(
    x: np.ndarray,
    niche: NicheSet,
    base_eval: Callable[[str, np.ndarray], float],
) -> float:
    """Bias plus the weighted sum of per-minimum contributions.

    Each contribution is the base function evaluated in the minimum's own
    frame (rotated, shifted), scaled by its hardness.  Base functions are
    zero at their minimum, so the value approaches the bias at every
    well-separated minimum.
    """
    x = as_float_vector(x, niche.dim, "x")
    w = niche_weights(x, niche)
    total = niche.bias
    for i in range(niche.n_minima):
        z = niche.rotations[i] @ (x - niche.positions[i])
        g = float(base_eval(niche.base_fns[i], z))
        if not np.isfinite(g):
            raise ValueError(f"base function {niche.base_fns[i]!r} returned a "
                             f"non-finite value at minimum {i}")
        total += w[i] * niche.hardness[i] * g
    return float(total)


def hardness(index: int, n_minima: int, min_h: float, max_h: float) -> float:
    """Linear difficulty ramp over the (1-based) minimum index."""
    if not 1 <= index <= n_minima:
        raise ValueError(f"index must lie in [1, {n_minima}], got {index}")
    if min_h > max_h:
        raise ValueError("min_h must not exceed max_h")
    if n_minima == 1:
        return float(min_h)
    return float((index - 1) / (n_minima - 1) * (max_h - min_h) + min_h)
