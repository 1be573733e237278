"""Deterministic generator for the 16 tunable composite problems.

Every problem is regenerated from seeds with its optima known by
construction: minima positions, per-minimum hardness and rotation, the
niching radius, and a bias equal to the documented best fitness value.
All base functions are normalized to be non-negative with value exactly 0
at the origin, so the bias is the exact optimum of the composite.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .niching import DEFAULT_SIGMA_W, NicheSet, hardness, niching_radius
from .validation import as_float_vector

__all__ = [
    "BASE_FUNCTIONS",
    "GenerationError",
    "ProblemSpec",
    "GeneratedProblem",
    "base_eval",
    "base_eval_batch",
    "skew_transform",
    "boundary_penalty",
    "random_rotation",
    "generate_positions",
    "instantiate_problem",
    "reference_table",
    "composite_evaluator",
    "dump_problem",
    "load_problem",
    "derive_rng",
]

BOUNDS = (-5.0, 5.0)
SKEW_BETA = 0.2
PENALTY_WEIGHT = 100.0
MIN_SEPARATION = 0.5
POSITION_WARP = 1.5
MIN_HARDNESS = 1.0
MAX_HARDNESS = 3.0
MAX_PLACEMENT_ATTEMPTS = 10_000

# Location of the smooth-tail optimum of the s*sin(sqrt|s|) ridge.
_SCHWEFEL_OPT = 420.9687462275036
_WEIERSTRASS_A = 0.5 ** np.arange(21)
_WEIERSTRASS_B = 3.0 ** np.arange(21)


class GenerationError(RuntimeError):
    """Minimum placement could not satisfy the separation constraint;
    usually the dimension is too small for the requested minima count."""


def derive_rng(*entropy: int) -> np.random.Generator:
    """Deterministic, portable stream from a tuple of integer fields.

    The entropy tuple is hashed by ``numpy.random.SeedSequence`` and
    drives a PCG64 generator, so identical fields reproduce identical
    streams on every platform.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _as_batch(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected a point or a batch of points, got shape {arr.shape}")


def skew_transform(z, beta: float = SKEW_BETA) -> np.ndarray:
    """Coordinate-wise asymmetry warp (fixes the origin and all negative
    coordinates; later coordinates are warped harder)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    batch, single = _as_batch(z)
    n = batch.shape[1]
    idx = np.arange(n) / (n - 1) if n > 1 else np.zeros(n)
    pos = batch > 0
    safe = np.where(pos, batch, 1.0)
    warped = safe ** (1.0 + beta * idx * np.sqrt(safe))
    out = np.where(pos, warped, batch)
    return out[0] if single else out


def boundary_penalty(x, bounds: tuple[float, float] = BOUNDS) -> float | np.ndarray:
    """Quadratic exterior penalty; exactly zero inside the box."""
    batch, single = _as_batch(x)
    half = 0.5 * (bounds[1] - bounds[0])
    center = 0.5 * (bounds[0] + bounds[1])
    excess = np.maximum(0.0, np.abs(batch - center) - half)
    pen = PENALTY_WEIGHT * (excess * excess).sum(axis=1)
    return float(pen[0]) if single else pen


def _axis_exponents(n: int, span: float) -> np.ndarray:
    return np.arange(n) / (n - 1) * span if n > 1 else np.zeros(n)


def _elliptic(Z: np.ndarray) -> np.ndarray:
    n = Z.shape[1]
    coeff = 10.0 ** _axis_exponents(n, 6.0)
    return (coeff * Z * Z).sum(axis=1)


def _diff_powers(Z: np.ndarray) -> np.ndarray:
    n = Z.shape[1]
    powers = 2.0 + _axis_exponents(n, 4.0)
    return (np.abs(Z) ** powers).sum(axis=1)


def _schwefel12_skewed(Z: np.ndarray) -> np.ndarray:
    zz = skew_transform(Z)
    partial = np.cumsum(zz, axis=1)
    return (partial * partial).sum(axis=1)


def _rosenbrock(Z: np.ndarray) -> np.ndarray:
    zz = Z + 1.0
    a = zz[:, :-1]
    b = zz[:, 1:]
    return (100.0 * (a * a - b) ** 2 + (a - 1.0) ** 2).sum(axis=1)


def _ackley_raw(Z: np.ndarray) -> np.ndarray:
    n = Z.shape[1]
    rms = np.sqrt((Z * Z).sum(axis=1) / n)
    mean_cos = np.cos(2.0 * np.pi * Z).sum(axis=1) / n
    return -20.0 * np.exp(-0.2 * rms) - np.exp(mean_cos) + 20.0 + np.e


# Residual float wobble of the raw form at the origin, removed so the
# normalized value there is exactly 0.0.
_ACKLEY_AT_ZERO = float(_ackley_raw(np.zeros((1, 1)))[0])


def _ackley_skewed(Z: np.ndarray) -> np.ndarray:
    return _ackley_raw(skew_transform(Z)) - _ACKLEY_AT_ZERO


def _rastrigin(Z: np.ndarray) -> np.ndarray:
    return (Z * Z - 10.0 * np.cos(2.0 * np.pi * Z) + 10.0).sum(axis=1)


def _weierstrass_coord(Z: np.ndarray) -> np.ndarray:
    phase = 2.0 * np.pi * _WEIERSTRASS_B * (Z[..., None] + 0.5)
    return (_WEIERSTRASS_A * np.cos(phase)).sum(axis=-1)


_WEIERSTRASS_AT_ZERO = float(_weierstrass_coord(np.zeros((1, 1)))[0, 0])


def _weierstrass_pen(Z: np.ndarray) -> np.ndarray:
    per_coord = _weierstrass_coord(Z) - _WEIERSTRASS_AT_ZERO
    return per_coord.sum(axis=1) + boundary_penalty(Z)


def _schwefel_ridge(s: np.ndarray, n: int) -> np.ndarray:
    """s*sin(sqrt|s|) inside [-500, 500], mirrored and quadratically
    damped outside so the ridge value never exceeds its in-range peak."""
    t = np.where(
        np.abs(s) <= 500.0,
        s,
        np.where(s > 500.0, 500.0 - np.mod(s, 500.0), np.mod(np.abs(s), 500.0) - 500.0),
    )
    val = t * np.sin(np.sqrt(np.abs(t)))
    over = np.maximum(0.0, np.abs(s) - 500.0)
    return val - over * over / (10_000.0 * n)


def _schwefel226_pen(Z: np.ndarray) -> np.ndarray:
    n = Z.shape[1]
    s = 100.0 * Z + _SCHWEFEL_OPT
    peak = _schwefel_ridge(np.array([_SCHWEFEL_OPT]), n)[0]
    per_coord = peak - _schwefel_ridge(s, n)
    return per_coord.sum(axis=1) + boundary_penalty(Z)


_BASE_TABLE: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "elliptic": _elliptic,
    "diff_powers": _diff_powers,
    "schwefel12_skewed": _schwefel12_skewed,
    "rosenbrock": _rosenbrock,
    "ackley_skewed": _ackley_skewed,
    "rastrigin": _rastrigin,
    "weierstrass_pen": _weierstrass_pen,
    "schwefel226_pen": _schwefel226_pen,
}

BASE_FUNCTIONS = tuple(_BASE_TABLE)


def base_eval_batch(fn_id: str, Z: np.ndarray) -> np.ndarray:
    """Evaluate one base function on a (m, n) batch."""
    try:
        fn = _BASE_TABLE[fn_id]
    except KeyError:
        raise ValueError(f"unknown base function {fn_id!r}; "
                         f"known: {', '.join(BASE_FUNCTIONS)}") from None
    return fn(np.asarray(Z, dtype=float))


def base_eval(fn_id: str, z) -> float:
    """Evaluate one base function at a single point."""
    z = as_float_vector(z, name="z")
    return float(base_eval_batch(fn_id, z[None, :])[0])


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly (Haar) distributed orthogonal matrix via sign-corrected QR."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    d = np.diag(r)
    return q * np.where(d == 0.0, 1.0, np.sign(d))


def generate_positions(
    n_minima: int,
    dim: int,
    rng: np.random.Generator,
    min_separation: float = MIN_SEPARATION,
    warp: float = POSITION_WARP,
    max_attempts: int = MAX_PLACEMENT_ATTEMPTS,
) -> np.ndarray:
    """Draw well-separated minima positions, skewed toward the lower corner.

    Uniform draws are warped by a power law (making the placement
    non-uniform) and mapped onto the box; draws closer than
    ``min_separation`` to an accepted point are rejected.
    """
    if n_minima < 2:
        raise ValueError("need at least two minima")
    lo, hi = BOUNDS
    span = hi - lo
    accepted: list[np.ndarray] = []
    for _ in range(max_attempts):
        point = span * rng.random(dim) ** warp + lo
        if accepted:
            dists = np.linalg.norm(np.asarray(accepted) - point, axis=1)
            if dists.min() < min_separation:
                continue
        accepted.append(point)
        if len(accepted) == n_minima:
            return np.asarray(accepted)
    raise GenerationError(
        f"could not place {n_minima} minima with separation {min_separation} "
        f"in dimension {dim} within {max_attempts} attempts"
    )


_CATALOG = (
    ("High-Conditioned Elliptic", "elliptic", -97.8),
    ("Different Powers", "diff_powers", 64.1),
    ("Skewed Schwefel No2", "schwefel12_skewed", 483.1),
    ("Rosenbrock", "rosenbrock", -96.7),
    ("Skewed Ackley", "ackley_skewed", -395.0),
    ("Rastrigin", "rastrigin", -34.6),
    ("Penalized Weierstrass", "weierstrass_pen", 494.0),
    ("Penalized Schwefel N26", "schwefel226_pen", -402.2),
)


def reference_table() -> list[tuple[int, str, str, int, float]]:
    """The 16 catalogued problems: (id, name, group, minima count, best
    fitness value)."""
    rows = []
    for pid in range(1, 17):
        name, _, f_star = _CATALOG[(pid - 1) % 8]
        group = "A" if pid <= 8 else "B"
        n_minima = 20 if group == "A" else 10
        rows.append((pid, name, group, n_minima, f_star))
    return rows


@dataclass(frozen=True)
class ProblemSpec:
    """Identity of one benchmark problem realization."""

    problem_id: int
    group: str
    base_fn: str
    n_minima: int
    dim: int
    instance: int
    paper_f_star: float

    def __post_init__(self):
        if not 1 <= self.problem_id <= 16:
            raise ValueError("problem_id must lie in 1..16")
        expected_group = "A" if self.problem_id <= 8 else "B"
        name, fn, f_star = _CATALOG[(self.problem_id - 1) % 8]
        if (
            self.group != expected_group
            or self.base_fn != fn
            or self.n_minima != (20 if expected_group == "A" else 10)
            or self.paper_f_star != f_star
        ):
            raise ValueError(f"spec fields inconsistent with problem id {self.problem_id}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.instance < 1:
            raise ValueError("instance must be >= 1")

    @classmethod
    def from_id(cls, problem_id: int, dim: int, instance: int) -> "ProblemSpec":
        if not 1 <= problem_id <= 16:
            raise ValueError(f"problem_id must lie in 1..16, got {problem_id}")
        name, fn, f_star = _CATALOG[(problem_id - 1) % 8]
        group = "A" if problem_id <= 8 else "B"
        return cls(
            problem_id=problem_id,
            group=group,
            base_fn=fn,
            n_minima=20 if group == "A" else 10,
            dim=dim,
            instance=instance,
            paper_f_star=f_star,
        )

    @property
    def name(self) -> str:
        return _CATALOG[(self.problem_id - 1) % 8][0]


@dataclass(frozen=True)
class GeneratedProblem:
    """A deterministic realization of a problem spec."""

    spec: ProblemSpec
    niche: NicheSet
    seed: int
    bias: float

    @property
    def dim(self) -> int:
        return self.spec.dim

    def evaluator(self) -> Callable[[np.ndarray], np.ndarray]:
        return composite_evaluator(self.niche)


def instantiate_problem(
    spec: ProblemSpec,
    master_seed: int,
    min_hardness: float = MIN_HARDNESS,
    max_hardness: float = MAX_HARDNESS,
    sigma_w: float = DEFAULT_SIGMA_W,
    min_separation: float = MIN_SEPARATION,
    warp: float = POSITION_WARP,
) -> GeneratedProblem:
    """Deterministically realize a problem from its identity and a master
    seed; identical inputs give bit-identical output."""
    entropy = (int(master_seed), spec.problem_id, spec.dim, spec.instance)
    rng = derive_rng(*entropy)
    seed64 = int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
    positions = generate_positions(
        spec.n_minima, spec.dim, rng, min_separation=min_separation, warp=warp
    )
    hard = np.array(
        [hardness(i + 1, spec.n_minima, min_hardness, max_hardness)
         for i in range(spec.n_minima)]
    )
    rotations = np.stack([random_rotation(spec.dim, rng) for _ in range(spec.n_minima)])
    niche = NicheSet(
        positions=positions,
        hardness=hard,
        rotations=rotations,
        base_fns=(spec.base_fn,) * spec.n_minima,
        niche_radius=niching_radius(positions),
        bias=spec.paper_f_star,
        sigma_w=sigma_w,
    )
    return GeneratedProblem(spec=spec, niche=niche, seed=seed64, bias=spec.paper_f_star)


def composite_evaluator(niche: NicheSet) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized objective for a niche set: callable mapping a (m, n)
    batch of points to m fitness values."""
    positions = niche.positions
    rotations = niche.rotations
    hard = niche.hardness
    fns = niche.base_fns
    width = niche.sigma_w * niche.niche_radius
    bias = niche.bias
    k = niche.n_minima

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        diff = pts[:, None, :] - positions[None, :, :]
        expo = np.einsum("mkn,mkn->mk", diff, diff) / (width * width)
        expo -= expo.min(axis=1, keepdims=True)
        weights = np.exp(-expo)
        weights /= weights.sum(axis=1, keepdims=True)
        total = np.full(pts.shape[0], bias)
        for i in range(k):
            z = diff[:, i, :] @ rotations[i].T
            total += weights[:, i] * hard[i] * base_eval_batch(fns[i], z)
        return total

    return evaluate


# ---------------------------------------------------------------------------
# Problem dump format: line-oriented text with hex floats for bit-exact
# cross-language replay.  Schema (one token per field, '#' comments none):
#
#   nichecma-problem 1
#   problem_id <int>            group <A|B>        base_fn <id>
#   dim <int>                   n_minima <int>     instance <int>
#   master fields: seed <uint64 derived seed>
#   bias / sigma_nich / sigma_w as hex floats
#   hardness: k hex floats on one line
#   position <i>: n hex floats          (k lines)
#   rotation <i>: n*n hex floats, row-major  (k lines)
#   end
# ---------------------------------------------------------------------------

_DUMP_MAGIC = "nichecma-problem 1"


def _hex(values: Iterable[float]) -> str:
    return " ".join(float(v).hex() for v in values)


def dump_problem(problem: GeneratedProblem, path=None) -> str:
    """Serialize a generated problem; returns the text, optionally writing
    it to ``path``."""
    spec = problem.spec
    niche = problem.niche
    buf = io.StringIO()
    w = buf.write
    w(f"{_DUMP_MAGIC}\n")
    w(f"problem_id {spec.problem_id}\n")
    w(f"group {spec.group}\n")
    w(f"base_fn {spec.base_fn}\n")
    w(f"dim {spec.dim}\n")
    w(f"n_minima {spec.n_minima}\n")
    w(f"instance {spec.instance}\n")
    w(f"seed {problem.seed}\n")
    w(f"paper_f_star {spec.paper_f_star!r}\n")
    w(f"bias {float(problem.bias).hex()}\n")
    w(f"sigma_nich {float(niche.niche_radius).hex()}\n")
    w(f"sigma_w {float(niche.sigma_w).hex()}\n")
    w(f"hardness {_hex(niche.hardness)}\n")
    for i in range(niche.n_minima):
        w(f"position {i} {_hex(niche.positions[i])}\n")
    for i in range(niche.n_minima):
        w(f"rotation {i} {_hex(niche.rotations[i].ravel())}\n")
    w("end\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def load_problem(source) -> GeneratedProblem:
    """Parse a problem dump produced by :func:`dump_problem`; accepts a
    path or the dump text itself."""
    text = source
    if "\n" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in str(text).splitlines() if ln.strip()]
    if not lines or lines[0] != _DUMP_MAGIC:
        raise ValueError("not a problem dump (bad magic line)")
    fields: dict[str, str] = {}
    positions: dict[int, np.ndarray] = {}
    rotations: dict[int, np.ndarray] = {}
    for ln in lines[1:]:
        if ln == "end":
            break
        key, _, rest = ln.partition(" ")
        if key in ("position", "rotation"):
            idx_s, _, vals = rest.partition(" ")
            vec = np.array([float.fromhex(tok) for tok in vals.split()])
            (positions if key == "position" else rotations)[int(idx_s)] = vec
        else:
            fields[key] = rest
    dim = int(fields["dim"])
    k = int(fields["n_minima"])
    spec = ProblemSpec.from_id(int(fields["problem_id"]), dim, int(fields["instance"]))
    pos = np.stack([positions[i] for i in range(k)])
    rot = np.stack([rotations[i].reshape(dim, dim) for i in range(k)])
    hard = np.array([float.fromhex(tok) for tok in fields["hardness"].split()])
    niche = NicheSet(
        positions=pos,
        hardness=hard,
        rotations=rot,
        base_fns=(fields["base_fn"],) * k,
        niche_radius=float.fromhex(fields["sigma_nich"]),
        bias=float.fromhex(fields["bias"]),
        sigma_w=float.fromhex(fields["sigma_w"]),
    )
    return GeneratedProblem(
        spec=spec, niche=niche, seed=int(fields["seed"]), bias=niche.bias
    )
