"""Bias-free fully connected ReLU networks with a scalar output.

The network computes ``h(x) = W_t relu(W_{t-1} ... relu(W_1 x))``. Inside a
region where the activation pattern is fixed, ``h`` is linear and its
gradient is the product of the layer matrices with the columns of inactive
neurons zeroed. A pre-activation of exactly zero counts as inactive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InvalidDimensionError, InvalidInputError, KinkProximityError
from .linalg import _frozen, as_generator, as_matrix, normalized_gaussian_matrix, spectral_norm


@dataclass(frozen=True)
class NetworkWeights:
    """Ordered layer matrices; ``layers[j]`` has shape ``(d_{j+1}, d_j)``."""

    layers: tuple

    def __init__(self, layers: Sequence):
        mats = tuple(_frozen(as_matrix(W, name=f"layer {j}")) for j, W in enumerate(layers))
        if not mats:
            raise InvalidDimensionError("a network needs at least one layer")
        for j in range(len(mats) - 1):
            if mats[j].shape[0] != mats[j + 1].shape[1]:
                raise InvalidDimensionError(
                    f"layer {j} outputs {mats[j].shape[0]} values but layer {j + 1} "
                    f"expects {mats[j + 1].shape[1]}"
                )
        if mats[-1].shape[0] != 1:
            raise InvalidDimensionError("the last layer must have a single row")
        object.__setattr__(self, "layers", mats)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].shape[1]] + [W.shape[0] for W in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1]

    def __eq__(self, other):
        if not isinstance(other, NetworkWeights):
            return NotImplemented
        if self.dims != other.dims:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))

    def __hash__(self):
        return hash(tuple(W.tobytes() for W in self.layers))

    def scaled(self, alpha: float) -> "NetworkWeights":
        return NetworkWeights([alpha * W for W in self.layers])

    def to_json(self) -> str:
        # json.dumps writes floats with repr, the shortest round-trip form
        doc = {"dims": self.dims, "layers": [W.ravel().tolist() for W in self.layers]}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "NetworkWeights":
        doc = json.loads(text)
        try:
            dims = [int(v) for v in doc["dims"]]
            flat = doc["layers"]
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed network document: {exc}") from exc
        if len(flat) != len(dims) - 1:
            raise InvalidDimensionError("dims and layers disagree on depth")
        layers = []
        for j, entries in enumerate(flat):
            rows, cols = dims[j + 1], dims[j]
            if len(entries) != rows * cols:
                raise InvalidDimensionError(
                    f"layer {j} has {len(entries)} entries, expected {rows}x{cols}"
                )
            layers.append(np.asarray(entries, dtype=np.float64).reshape(rows, cols))
        return cls(layers)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "NetworkWeights":
        with open(path) as fh:
            return cls.from_json(fh.read())


def random_network(dims: Sequence[int], rng) -> NetworkWeights:
    """Normalized random weights: entries of layer j are N(0, 1/d_j)."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or dims[-1] != 1 or min(dims) < 1:
        raise InvalidDimensionError(f"invalid architecture {dims}")
    gen = as_generator(rng)
    return NetworkWeights(
        [normalized_gaussian_matrix(dims[j + 1], dims[j], gen) for j in range(len(dims) - 1)]
    )


@dataclass(frozen=True)
class ForwardTrace:
    pre_activations: list
    post_activations: list

    @property
    def output(self) -> float:
        return float(self.pre_activations[-1][0])


@dataclass(frozen=True)
class ActivationPattern:
    masks: list

    def __eq__(self, other):
        if not isinstance(other, ActivationPattern):
            return NotImplemented
        return len(self.masks) == len(other.masks) and all(
            np.array_equal(a, b) for a, b in zip(self.masks, other.masks)
        )


def _check_input(net: NetworkWeights, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise InvalidInputError(f"expected a vector of length {net.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input contains non-finite entries")
    return x


def forward(net: NetworkWeights, x) -> ForwardTrace:
    x = _check_input(net, x)
    pre, post = [], []
    a = x
    for W in net.layers:
        z = W @ a
        a = np.maximum(z, 0.0)
        pre.append(z)
        post.append(a)
    return ForwardTrace(pre, post)


def activation_pattern(trace: ForwardTrace) -> ActivationPattern:
    """Masks of the hidden layers; the linear output layer is not included."""
    return ActivationPattern([z > 0 for z in trace.pre_activations[:-1]])


def value_and_gradient(net: NetworkWeights, x) -> tuple[float, np.ndarray]:
    """Network output and input gradient from a single forward pass."""
    x = _check_input(net, x)
    return _value_and_gradient(net.layers, x)


def _value_and_gradient(layers, x):
    masks = []
    a = x
    for W in layers[:-1]:
        z = W @ a
        m = z > 0
        masks.append(m)
        a = np.where(m, z, 0.0)
    out = float(layers[-1][0] @ a)
    g = np.array(layers[-1][0])
    for W, m in zip(reversed(layers[:-1]), reversed(masks)):
        g = np.where(m, g, 0.0) @ W
    return out, g


def input_gradient(net: NetworkWeights, x) -> np.ndarray:
    """Gradient of ``h`` at ``x``: the row vector ``W^x_t ... W^x_1``."""
    return value_and_gradient(net, x)[1]


def gradient_check(net: NetworkWeights, x, fd_step: float = 1e-6) -> float:
    """Compare :func:`input_gradient` with central finite differences.

    Returns ``max_j |g_j - fd_j| / max(||fd||_inf, 1e-12)``. Raises
    :class:`KinkProximityError` if a hidden pre-activation is close enough to
    zero that the stencil could cross a kink.
    """
    if not fd_step > 0:
        raise InvalidInputError("fd_step must be positive")
    x = _check_input(net, x)
    trace = forward(net, x)
    lip = 1.0
    for i, W in enumerate(net.layers[:-1]):
        lip *= spectral_norm(W)
        margin = 10.0 * fd_step * lip
        z = trace.pre_activations[i]
        close = np.flatnonzero(np.abs(z) <= margin)
        if close.size:
            j = int(close[0])
            raise KinkProximityError(i, j, float(z[j]), margin)
    g = input_gradient(net, x)
    fd = np.empty_like(x)
    for j in range(x.shape[0]):
        xp, xm = x.copy(), x.copy()
        xp[j] += fd_step
        xm[j] -= fd_step
        # divide by the step actually represented, not the requested one
        fd[j] = (forward(net, xp).output - forward(net, xm).output) / (xp[j] - xm[j])
    denom = max(float(np.max(np.abs(fd))), 1e-12)
    return float(np.max(np.abs(g - fd)) / denom)
