"""Surjectivity of column submatrices and the supporting Monte-Carlo checks.

A ``k x d`` matrix maps the unit ball onto a set containing the radius-``c``
ball exactly when its k-th singular value is at least ``c``. The
``(c1, c2)`` property asks this of every submatrix built from at least
``c1 * d`` columns. Adding columns can only grow the image of the ball, so
only subsets of size exactly ``ceil(c1 * d)`` are ever tested.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import InvalidFractionError, InvalidInputError, RankDeficiencyError
from .linalg import as_generator, as_matrix, extremal_singular_values, gaussian_matrix

EXHAUSTIVE = "exhaustive"
MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class SurjectivityReport:
    c1: float
    subset_size: int
    mode: str
    subsets_tested: int
    min_sigma_k: float
    mean_sigma_k: float
    argmin_subset: tuple

    def to_dict(self) -> dict:
        d = asdict(self)
        d["argmin_subset"] = list(self.argmin_subset)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class TailSumStats:
    d: int
    c1: float
    trials: int
    min: float
    max: float
    mean: float
    std: float
    p01: float
    samples: np.ndarray = field(repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["samples"]
        return d

    def dump_samples(self, path) -> None:
        """Write the raw Z/d samples as a single-column CSV."""
        with open(path, "w") as fh:
            fh.write("z_over_d\n")
            for v in self.samples:
                fh.write(f"{float(v)!r}\n")


def subset_size(c1: float, d: int) -> int:
    """``ceil(c1 * d)``, robust to ``c1 * d`` landing a hair above an integer."""
    if not 0 < c1 <= 1:
        raise InvalidFractionError(f"c1 must lie in (0, 1], got {c1}")
    return max(1, math.ceil(c1 * d - 1e-9))


def submatrix_sigma_k(W, A) -> float:
    """k-th singular value of the columns of ``W`` indexed by ``A``."""
    W = as_matrix(W)
    idx = np.asarray(sorted(A), dtype=np.intp)
    k, d = W.shape
    if len(set(idx.tolist())) != idx.size:
        raise InvalidInputError("column indices must be distinct")
    if idx.size and (idx[0] < 0 or idx[-1] >= d):
        raise InvalidInputError(f"column index out of range for {d} columns")
    if idx.size < k:
        raise RankDeficiencyError(
            f"{idx.size} columns cannot span {k} dimensions"
        )
    return extremal_singular_values(W[:, idx])[0]


def sample_subset(gen: np.random.Generator, d: int, size: int) -> tuple:
    """Uniform size-``size`` subset of ``range(d)`` by a partial Fisher-Yates shuffle.

    Swap positions are ``i + floor(u_i * (d - i))`` with ``u_i`` the i-th
    double from ``gen.random(size)``.
    """
    perm = np.arange(d)
    u = gen.random(size)
    js = np.arange(size) + np.floor(u * (d - np.arange(size))).astype(np.intp)
    for i, j in enumerate(js):
        perm[i], perm[j] = perm[j], perm[i]
    return tuple(sorted(perm[:size].tolist()))


def estimate_c1c2(W, c1: float, budget: int, rng) -> SurjectivityReport:
    """Smallest k-th singular value over column subsets of size ``ceil(c1 d)``.

    Enumerates every subset when there are at most ``budget`` of them (the
    result is then exact). Otherwise samples ``budget`` uniform subsets, and
    ``min_sigma_k`` is only an upper estimate of the true constant.
    """
    W = as_matrix(W)
    k, d = W.shape
    s = subset_size(c1, d)
    if s < k:
        raise InvalidFractionError(
            f"ceil({c1} * {d}) = {s} columns is fewer than the {k} rows"
        )
    if budget < 1:
        raise InvalidInputError("budget must be positive")
    if math.comb(d, s) <= budget:
        mode = EXHAUSTIVE
        subsets = combinations(range(d), s)
    else:
        mode = MONTE_CARLO
        gen = as_generator(rng)
        subsets = (sample_subset(gen, d, s) for _ in range(budget))

    best, best_set, total, count = math.inf, (), 0.0, 0
    for A in subsets:
        v = extremal_singular_values(W[:, list(A)])[0]
        total += v
        count += 1
        if v < best:
            best, best_set = v, tuple(A)
    return SurjectivityReport(
        c1=float(c1),
        subset_size=s,
        mode=mode,
        subsets_tested=count,
        min_sigma_k=float(best),
        mean_sigma_k=max(total / count, float(best)),
        argmin_subset=best_set,
    )


def tail_sum_mc(d: int, c1: float, trials: int, rng, chunk: int = 256) -> TailSumStats:
    """Distribution of the sum of the ``ceil(c1 d)`` smallest squared Gaussians, over d."""
    if trials < 1 or d < 1:
        raise InvalidInputError("d and trials must be positive")
    s = subset_size(c1, d)
    gen = as_generator(rng)
    out = np.empty(trials)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        sq = gen.standard_normal((n, d)) ** 2
        if s < d:
            sq = np.partition(sq, s - 1, axis=1)[:, :s]
        out[done : done + n] = np.sort(sq, axis=1).sum(axis=1) / d
        done += n
    return TailSumStats(
        d=int(d),
        c1=float(c1),
        trials=int(trials),
        min=float(out.min()),
        max=float(out.max()),
        mean=float(out.mean()),
        std=float(out.std()),
        p01=float(np.percentile(out, 1)),
        samples=out,
    )


def vershynin_bounds(n: int, m: int, variance_dim: int, t: float) -> tuple[float, float]:
    """Interval that should contain both extremal singular values of an n x m
    Gaussian matrix with entry variance ``1/variance_dim``."""
    root = math.sqrt(variance_dim)
    return (math.sqrt(m) - math.sqrt(n)) / root - t, (math.sqrt(m) + math.sqrt(n)) / root + t


def vershynin_trial(n: int, m: int, variance_dim: int, t: float, rng) -> tuple[bool, float, float]:
    lo, hi = vershynin_bounds(n, m, variance_dim, t)
    W = gaussian_matrix(n, m, 1.0 / variance_dim, rng)
    smin, smax = extremal_singular_values(W)
    return (lo <= smin and smax <= hi), smin, smax


def vershynin_check(n: int, m: int, variance_dim: int, t: float, trials: int, rng) -> float:
    """Fraction of trials whose extremal singular values land in the interval."""
    if n > m:
        raise InvalidInputError(f"need n <= m, got n={n}, m={m}")
    gen = as_generator(rng)
    hits = sum(vershynin_trial(n, m, variance_dim, t, gen)[0] for _ in range(trials))
    return hits / trials
