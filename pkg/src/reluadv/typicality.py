"""Typicality predicates for weights and for examples.

Both thresholds use the input dimension ``d = d_1`` and the natural log.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import InvalidInputError
from .linalg import as_generator, spectral_norm
from .relunet import NetworkWeights, forward
from .surjectivity import estimate_c1c2


@dataclass(frozen=True)
class TypicalityReport:
    per_layer_active_fraction: list
    output_magnitude: float
    output_bound: float
    example_typical: bool
    c1: float
    c2: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class WeightTypicalityReport:
    per_layer_min_sigma_k: list
    per_layer_spectral_norm: list
    weights_typical_at: float
    modes: list

    def to_dict(self) -> dict:
        return asdict(self)


def example_typicality(net: NetworkWeights, x, c1: float, c2: float) -> TypicalityReport:
    """Check both example conditions against a forward pass of ``x``.

    Condition one is applied to hidden layers only: at least a ``2 * c1``
    fraction of their pre-activations must reach ``c2 * ||x|| / sqrt(d)``.
    Condition two bounds ``|h(x)|`` by ``||x|| * sqrt(ln(d) / d)``.
    """
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise InvalidInputError("example must be non-zero")
    d = net.input_dim
    trace = forward(net, x)
    threshold = c2 * norm / math.sqrt(d)
    fractions = [float(np.mean(z >= threshold)) for z in trace.pre_activations[:-1]]
    magnitude = abs(trace.output)
    bound = norm * math.sqrt(math.log(d) / d)
    typical = all(f >= 2 * c1 for f in fractions) and magnitude <= bound
    return TypicalityReport(
        per_layer_active_fraction=fractions,
        output_magnitude=magnitude,
        output_bound=bound,
        example_typical=bool(typical),
        c1=float(c1),
        c2=float(c2),
    )


def weight_typicality(net: NetworkWeights, c1: float, budget: int, rng) -> WeightTypicalityReport:
    """Largest ``c2`` for which every layer is ``(c1, c2)``-surjective with
    spectral norm at most ``1 / c2`` (as far as the subset search can tell)."""
    gen = as_generator(rng)
    sig, norms, modes = [], [], []
    for W in net.layers:
        rep = estimate_c1c2(W, c1, budget, gen)
        sig.append(rep.min_sigma_k)
        modes.append(rep.mode)
        norms.append(spectral_norm(W))
    at = min(min(s, 1.0 / n if n > 0 else 0.0) for s, n in zip(sig, norms))
    return WeightTypicalityReport(
        per_layer_min_sigma_k=sig,
        per_layer_spectral_norm=norms,
        weights_typical_at=float(max(at, 0.0)),
        modes=modes,
    )
