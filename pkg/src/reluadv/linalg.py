"""Seeded Gaussian sampling and extremal singular values of dense matrices.

Matrices are plain two-dimensional ``float64`` numpy arrays. Functions that
construct matrices return them read-only so they can be shared freely
between threads.

Reproducibility contract
------------------------
Every random draw in the package goes through :class:`RngState`. A state
``(seed, stream_id)`` maps to a numpy ``Philox4x64-10`` counter-based bit
generator whose 128-bit key is ``seed | (stream_id << 64)`` and whose counter
starts at zero. Distinct ``(seed, stream_id)`` pairs therefore give distinct
keys by construction, not just with high probability. Normal variates are
produced by ``numpy.random.Generator.standard_normal`` (the ziggurat method
of numpy's Generator), then scaled by the standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, InvalidDimensionError, InvalidInputError

_U64 = 1 << 64

POWER_MAX_ITER = 10_000
POWER_TOL = 1e-12


@dataclass(frozen=True)
class RngState:
    """Seed plus substream index; a value, never shared mutably."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < _U64:
                raise InvalidInputError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self) -> np.random.Generator:
        key = int(self.seed) | (int(self.stream_id) << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngState":
        return RngState(self.seed, stream_id)


def as_generator(rng) -> np.random.Generator:
    """Accept an :class:`RngState`, a Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngState(int(rng)).generator()
    raise InvalidInputError(f"cannot build a random generator from {type(rng).__name__}")


def as_matrix(M, *, name="matrix") -> np.ndarray:
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise InvalidDimensionError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return A


def _frozen(A: np.ndarray) -> np.ndarray:
    A = np.ascontiguousarray(A, dtype=np.float64)
    A.setflags(write=False)
    return A


def gaussian_matrix(rows: int, cols: int, variance: float, rng) -> np.ndarray:
    """Return a ``rows x cols`` matrix of i.i.d. ``N(0, variance)`` entries.

    Entries are drawn in row-major order from ``rng``.
    """
    if int(rows) < 1 or int(cols) < 1:
        raise InvalidDimensionError(f"dimensions must be positive, got {rows}x{cols}")
    if not variance >= 0:
        raise InvalidInputError(f"variance must be non-negative, got {variance}")
    if variance == 0:
        return _frozen(np.zeros((rows, cols)))
    gen = as_generator(rng)
    return _frozen(gen.standard_normal((int(rows), int(cols))) * np.sqrt(variance))


def normalized_gaussian_matrix(rows: int, cols: int, rng) -> np.ndarray:
    """Gaussian matrix with variance ``1/cols`` (fan-in normalization)."""
    return gaussian_matrix(rows, cols, 1.0 / cols, rng)


def extremal_singular_values(M) -> tuple[float, float]:
    """Smallest and largest of the ``k = rows`` singular values of a wide matrix."""
    A = as_matrix(M)
    if A.shape[0] > A.shape[1]:
        raise InvalidDimensionError(
            f"expected rows <= cols, got {A.shape[0]}x{A.shape[1]}"
        )
    try:
        s = np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"SVD failed: {exc}") from exc
    return float(s[-1]), float(s[0])


def spectral_norm(M, *, max_iter: int = POWER_MAX_ITER, tol: float = POWER_TOL) -> float:
    """Largest singular value by power iteration on the smaller Gram matrix.

    Stops once the Rayleigh quotient changes by at most ``tol`` (relative)
    on two consecutive iterations.
    """
    A = as_matrix(M)
    G = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    n = G.shape[0]
    if not np.any(G):
        return 0.0
    # fixed start vector keeps the routine a pure function of M
    v = np.random.default_rng(0x5EED).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = float(v @ G @ v)
    calm = 0
    change = np.inf
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector fell in the null space; restart on the largest row
            v = G[np.argmax(np.abs(G).sum(axis=1))].copy()
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        new = float(v @ G @ v)
        change = abs(new - lam)
        lam = new
        if change <= tol * abs(lam):
            calm += 1
            if calm >= 2:
                return float(np.sqrt(max(lam, 0.0)))
        else:
            calm = 0
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", residual=change
    )
