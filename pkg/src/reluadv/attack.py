"""Gradient-flow attacks that push ``y * h(x)`` down until the sign of ``h`` flips.

``gradient_flow_attack`` discretizes the flow by arc length: every step moves
exactly ``step`` along the normalized negative gradient, so the budget and the
reported flip length are both trajectory lengths. ``gd_attack`` is plain
gradient descent with a fixed learning rate; its arc length is the sum of
``eta * ||g||`` over the steps taken.

On a sign change the crossing is located on the last segment by bisection.
``h`` is piecewise linear along a segment, so this converges.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .exceptions import InvalidInputError
from .relunet import NetworkWeights, _check_input, _value_and_gradient

BISECTION_MAX_ITER = 60
DEFAULT_LENGTH_MULTIPLIER = 20.0
DEFAULT_STEPS_PER_BUDGET = 10_000

CAUSE_FLIPPED = "flipped"
CAUSE_DEGENERATE = "degenerate-start"
CAUSE_VANISHING = "vanishing-gradient"
CAUSE_BUDGET = "budget-exhausted"


@dataclass(frozen=True)
class AttackConfig:
    """Step and budget settings. ``None`` means "derive from x0".

    The default budget is ``length_multiplier * ||x0|| * sqrt(ln d) / sqrt(d)``
    (``ln d`` floored at 1 so that ``d = 1`` keeps a positive budget) and the
    default step is a ten-thousandth of the budget.
    """

    step: float | None = None
    max_arc_length: float | None = None
    gradient_floor: float = 1e-12
    crossing_tolerance: float = 1e-9
    length_multiplier: float = DEFAULT_LENGTH_MULTIPLIER

    def resolve(self, x0) -> "AttackConfig":
        x0 = np.asarray(x0, dtype=np.float64)
        d = x0.shape[0]
        L = self.max_arc_length
        if L is None:
            L = default_max_arc_length(float(np.linalg.norm(x0)), d, self.length_multiplier)
        step = self.step if self.step is not None else L / DEFAULT_STEPS_PER_BUDGET
        if not (step > 0 and L > 0 and step < L):
            raise InvalidInputError(f"need 0 < step < max_arc_length, got step={step}, L={L}")
        return replace(self, step=float(step), max_arc_length=float(L))


def default_max_arc_length(x_norm: float, d: int, multiplier: float = DEFAULT_LENGTH_MULTIPLIER) -> float:
    return multiplier * x_norm * math.sqrt(max(math.log(d), 1.0)) / math.sqrt(d)


@dataclass
class AttackResult:
    success: bool
    arc_length_to_flip: float
    euclidean_displacement: float
    steps_taken: int
    initial_output: float
    final_output: float
    min_gradient_norm: float
    max_gradient_norm: float
    x_adv: np.ndarray
    cause: str = CAUSE_FLIPPED

    def to_row(self) -> dict:
        """CSV fields for this attack; the caller adds d, dims, seed and trial."""
        return {
            "success": int(self.success),
            "arc_len": self.arc_length_to_flip if self.success else float("nan"),
            "l2_disp": self.euclidean_displacement,
            "steps": self.steps_taken,
            "h0": self.initial_output,
            "hT": self.final_output,
            "min_grad": self.min_gradient_norm,
            "max_grad": self.max_gradient_norm,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_adv"] = self.x_adv.tolist()
        return d


def _bisect(layers, a, b, y, tol):
    """Shrink ``[a, b]`` (y*h(a) > 0 >= y*h(b)) to a point with ``|h| <= tol``.

    Returns ``(fraction along the segment, point, h)``. If the iteration cap is
    hit, the flipped end is returned so the sign change is preserved.
    """
    lo, hi = 0.0, 1.0
    h_hi = None
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        p = a + mid * (b - a)
        h = _value(layers, p)
        if abs(h) <= tol:
            return mid, p, h
        if y * h > 0:
            lo = mid
        else:
            hi, h_hi = mid, h
    p = a + hi * (b - a)
    return hi, p, (h_hi if h_hi is not None else _value(layers, p))


def _value(layers, x):
    a = x
    for W in layers[:-1]:
        a = np.maximum(W @ a, 0.0)
    return float(layers[-1][0] @ a)


def _prepare(net, x0):
    x0 = _check_input(net, x0)
    if not np.any(x0):
        raise InvalidInputError("x0 must be non-zero")
    return x0


def _finish(x0, x, h0, h, steps, arc, gmin, gmax, success, cause):
    return AttackResult(
        success=success,
        arc_length_to_flip=float(arc),
        euclidean_displacement=float(np.linalg.norm(x - x0)),
        steps_taken=steps,
        initial_output=float(h0),
        final_output=float(h),
        min_gradient_norm=float(gmin),
        max_gradient_norm=float(gmax),
        x_adv=x,
        cause=cause,
    )


def _run(net, x0, advance, tol, floor, max_steps, fixed_step=None):
    """Shared descent loop.

    ``advance(y, g, gnorm)`` returns the displacement of one step (subtracted
    from x) and the arc length it covers. With ``fixed_step`` the arc length
    walked so far is ``steps * fixed_step`` rather than a running sum.
    """
    layers = net.layers
    x = x0.copy()
    h0, g = _value_and_gradient(layers, x)
    gn = float(np.linalg.norm(g))
    gmin = gmax = gn
    if abs(h0) <= tol:
        return _finish(x0, x, h0, h0, 0, 0.0, gmin, gmax, True, CAUSE_DEGENERATE)
    y = 1.0 if h0 > 0 else -1.0
    h = h0
    arc = 0.0
    steps = 0
    while True:
        if gn < floor:
            return _finish(x0, x, h0, h, steps, arc, gmin, gmax, False, CAUSE_VANISHING)
        if steps >= max_steps:
            return _finish(x0, x, h0, h, steps, arc, gmin, gmax, False, CAUSE_BUDGET)
        delta, seg = advance(y, g, gn)
        x_new = x - delta
        steps += 1
        h_new, g_new = _value_and_gradient(layers, x_new)
        if abs(h_new) <= tol:
            return _finish(x0, x_new, h0, h_new, steps, arc + seg, gmin, gmax, True, CAUSE_FLIPPED)
        if y * h_new < 0:
            frac, p, hp = _bisect(layers, x, x_new, y, tol)
            return _finish(x0, p, h0, hp, steps, arc + frac * seg, gmin, gmax, True, CAUSE_FLIPPED)
        x, h, g = x_new, h_new, g_new
        arc = steps * fixed_step if fixed_step is not None else arc + seg
        gn = float(np.linalg.norm(g))
        gmin = min(gmin, gn)
        gmax = max(gmax, gn)


def gradient_flow_attack(net: NetworkWeights, x0, cfg: AttackConfig | None = None) -> AttackResult:
    """Arc-length parametrized gradient flow on ``x -> sign(h(x0)) * h(x)``."""
    x0 = _prepare(net, x0)
    cfg = (cfg or AttackConfig()).resolve(x0)
    step = cfg.step
    # steps * step covers the budget; the last one may overshoot by < step
    max_steps = math.ceil(cfg.max_arc_length / step)

    def advance(y, g, gn):
        return (step * y / gn) * g, step

    return _run(
        net, x0, advance, cfg.crossing_tolerance, cfg.gradient_floor, max_steps, fixed_step=step
    )


def gd_attack(
    net: NetworkWeights,
    x0,
    eta: float,
    max_steps: int,
    crossing_tolerance: float = 1e-9,
    gradient_floor: float = 1e-12,
) -> AttackResult:
    """Fixed learning-rate gradient descent on ``x -> sign(h(x0)) * h(x)``."""
    if not eta > 0:
        raise InvalidInputError("eta must be positive")
    x0 = _prepare(net, x0)

    def advance(y, g, gn):
        return (eta * y) * g, eta * gn

    return _run(net, x0, advance, crossing_tolerance, gradient_floor, int(max_steps))


def trajectory_gradient_floor(net: NetworkWeights, x0, cfg: AttackConfig | None = None) -> float:
    """Smallest input-gradient norm seen along the gradient-flow trajectory."""
    return gradient_flow_attack(net, x0, cfg).min_gradient_norm
