import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reluadv.attack import (
    CAUSE_BUDGET,
    CAUSE_DEGENERATE,
    CAUSE_VANISHING,
    AttackConfig,
    default_max_arc_length,
    gd_attack,
    gradient_flow_attack,
    trajectory_gradient_floor,
)
from reluadv.exceptions import InvalidInputError
from reluadv.experiments import sphere_point
from reluadv.linalg import RngState
from reluadv.relunet import NetworkWeights, forward, input_gradient, random_network

seeds = st.integers(min_value=0, max_value=2**32)
LINEAR = NetworkWeights([[[3.0, 4.0]]])


def test_linear_closed_form():
    res = gradient_flow_attack(LINEAR, [1.0, 0.0])
    assert res.success
    assert res.arc_length_to_flip == pytest.approx(0.6, abs=1e-3)
    assert res.x_adv == pytest.approx([0.64, -0.48], abs=1e-3)
    assert abs(res.final_output) <= 1e-9 or res.final_output < 0


def test_linear_random_instances():
    gen = RngState(12).generator()
    for _ in range(100):
        W = gen.standard_normal((1, 6))
        x0 = gen.standard_normal(6)
        res = gradient_flow_attack(NetworkWeights([W]), x0)
        expected = abs(W[0] @ x0) / np.linalg.norm(W)
        assert res.arc_length_to_flip == pytest.approx(expected, rel=1e-3)


def test_degenerate_start():
    res = gradient_flow_attack(NetworkWeights([[[1.0, -1.0]]]), [1.0, 1.0])
    assert res.success and res.cause == CAUSE_DEGENERATE
    assert res.arc_length_to_flip == 0.0 and res.steps_taken == 0


def test_default_budget():
    assert default_max_arc_length(math.sqrt(100), 100) == pytest.approx(20 * math.sqrt(math.log(100)))
    cfg = AttackConfig().resolve(np.ones(100))
    assert cfg.step == pytest.approx(cfg.max_arc_length / 1e4)
    with pytest.raises(InvalidInputError):
        AttackConfig(step=2.0, max_arc_length=1.0).resolve(np.ones(3))


def test_zero_start_rejected():
    with pytest.raises(InvalidInputError):
        gradient_flow_attack(LINEAR, [0.0, 0.0])
    with pytest.raises(InvalidInputError):
        gd_attack(LINEAR, [1.0, 0.0], eta=0.0, max_steps=10)


def test_vanishing_gradient_reported():
    res = gradient_flow_attack(LINEAR, [1.0, 0.0], AttackConfig(gradient_floor=10.0))
    assert not res.success and res.cause == CAUSE_VANISHING
    assert res.steps_taken == 0


def test_budget_exhaustion_and_arc_accounting():
    step = 0.01
    res = gradient_flow_attack(LINEAR, [1.0, 0.0], AttackConfig(step=step, max_arc_length=0.3))
    assert not res.success and res.cause == CAUSE_BUDGET
    assert res.arc_length_to_flip == res.steps_taken * step
    assert res.steps_taken == 30
    assert math.isnan(res.to_row()["arc_len"])


def test_constant_pattern_straight_line():
    # pattern stays (on, on) all the way: h = x1 - x2/2 along a straight path
    net = NetworkWeights([np.eye(2), [[1.0, -0.5]]])
    x0 = np.array([3.0, 4.0])
    g = np.array([1.0, -0.5])
    gn = np.linalg.norm(g)
    res = gradient_flow_attack(net, x0)
    assert res.arc_length_to_flip == pytest.approx(1.0 / gn, rel=1e-9)
    assert res.x_adv == pytest.approx(x0 - res.arc_length_to_flip * g / gn, abs=1e-9)
    assert res.min_gradient_norm == res.max_gradient_norm == pytest.approx(gn)
    # |h| drops at exactly ||g|| per unit arc length
    part = gradient_flow_attack(net, x0, AttackConfig(step=0.05, max_arc_length=0.5))
    assert part.final_output == pytest.approx(1.0 - part.arc_length_to_flip * gn, abs=1e-12)


def test_flow_succeeds_on_wide_random_nets():
    ok = 0
    for i in range(100):
        gen = RngState(i, 41).generator()
        net = random_network([4096, 256, 16, 1], gen)
        ok += gradient_flow_attack(net, sphere_point(gen, 4096)).success
    assert ok >= 95


def test_decrease_is_monotone():
    gen = RngState(5, 42).generator()
    net = random_network([64, 24, 6, 1], gen)
    x0 = sphere_point(gen, 64)
    full = gradient_flow_attack(net, x0)
    step = full.arc_length_to_flip / 200
    y = math.copysign(1.0, full.initial_output)
    prev = y * full.initial_output
    for n in range(2, 200, 7):
        r = gradient_flow_attack(net, x0, AttackConfig(step=step, max_arc_length=n * step))
        assert y * r.final_output <= prev
        prev = y * r.final_output


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_result_invariants(seed):
    gen = RngState(seed).generator()
    net = random_network([32, 12, 4, 1], gen)
    x0 = sphere_point(gen, 32)
    for res in (gradient_flow_attack(net, x0), gd_attack(net, x0, 1e-3, 20_000)):
        assert res.min_gradient_norm <= res.max_gradient_norm
        if res.success:
            assert res.euclidean_displacement <= res.arc_length_to_flip * (1 + 1e-9)
            assert (np.sign(res.final_output) != np.sign(res.initial_output)
                    or abs(res.final_output) <= 1e-9)
            assert forward(net, res.x_adv).output == pytest.approx(res.final_output, abs=1e-12)


def test_gd_linear_matches_flow():
    flow = gradient_flow_attack(LINEAR, [1.0, 0.0])
    gd = gd_attack(LINEAR, [1.0, 0.0], eta=0.001, max_steps=10_000)
    assert gd.success
    assert gd.x_adv == pytest.approx(flow.x_adv, abs=1e-3)
    assert gd.arc_length_to_flip == pytest.approx(0.6, abs=1e-3)


def test_gd_self_convergence():
    gen = RngState(3, 43).generator()
    net = random_network([128, 30, 7, 1], gen)
    x0 = sphere_point(gen, 128)
    eta = 1e-3
    d1, d2, d4 = (gd_attack(net, x0, e, 10**6).euclidean_displacement for e in (eta, eta / 2, eta / 4))
    assert abs(d1 - d2) <= 0.01 * d4
    assert abs(d2 - d4) <= 0.01 * d4


def test_gd_agrees_with_flow():
    for i in range(20):
        gen = RngState(i, 44).generator()
        net = random_network([256, 48, 9, 1], gen)
        x0 = sphere_point(gen, 256)
        flow = gradient_flow_attack(net, x0)
        eta = AttackConfig().resolve(x0).step / np.linalg.norm(input_gradient(net, x0))
        gd = gd_attack(net, x0, eta, 10**6)
        assert flow.success and gd.success
        assert gd.arc_length_to_flip == pytest.approx(flow.arc_length_to_flip, rel=0.05)


def test_gradient_floor_linear():
    assert trajectory_gradient_floor(LINEAR, [1.0, 0.0]) == pytest.approx(5.0)
    res = gradient_flow_attack(LINEAR, [1.0, 0.0])
    assert res.min_gradient_norm == res.max_gradient_norm == pytest.approx(5.0)
