import json

import numpy as np
import pytest

import drpolicy as dr
from drpolicy._validation import ValidationError


def test_action_prob_hand_values():
    pol = dr.LogisticPolicy(theta=np.zeros(3))
    assert dr.action_prob(pol, np.array([1.0, -2.0, 0.5]), 1) == 0.5
    pol2 = dr.LogisticPolicy(theta=np.array([np.log(3.0), 7.0]))
    assert dr.action_prob(pol2, np.array([1.0, 0.0]), 1) == pytest.approx(0.75, rel=1e-12)
    assert dr.action_prob(pol2, np.array([1.0, 0.0]), 0) == pytest.approx(0.25, rel=1e-12)


def test_action_prob_numerically_stable():
    pol = dr.LogisticPolicy(theta=np.array([10.0]))
    p = dr.action_prob(pol, np.array([5.0]), 1)  # s^T theta = 50
    assert np.isfinite(p)
    assert 1.0 - 1e-12 < p <= 1.0
    assert 0.0 <= dr.action_prob(pol, np.array([-5.0]), 1) < 1e-20


def test_probabilities_sum_to_one_exactly():
    rng = np.random.default_rng(0)
    pol = dr.LogisticPolicy(theta=rng.uniform(-10, 10, size=2))
    for _ in range(20):
        s = rng.standard_normal(2) * 5
        assert dr.action_prob(pol, s, 0) + dr.action_prob(pol, s, 1) == 1.0


def test_grad_hand_values():
    pol = dr.LogisticPolicy(theta=np.zeros(2))
    g = dr.grad_action_prob(pol, np.array([2.0, 0.0]), 1)
    assert np.allclose(g, [0.5, 0.0])
    rng = np.random.default_rng(1)
    for _ in range(10):
        s = rng.standard_normal(2)
        g1 = dr.grad_action_prob(pol, s, 1)
        g0 = dr.grad_action_prob(pol, s, 0)
        assert np.allclose(g0, -g1)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(50):
        theta = rng.uniform(-3, 3, size=3)
        s = rng.standard_normal(3)
        a = int(rng.integers(0, 2))
        pol = dr.LogisticPolicy(theta=theta)
        g = dr.grad_action_prob(pol, s, a)
        fd = np.empty(3)
        for k in range(3):
            up, dn = theta.copy(), theta.copy()
            up[k] += h
            dn[k] -= h
            fd[k] = (
                dr.action_prob(dr.LogisticPolicy(theta=up), s, a)
                - dr.action_prob(dr.LogisticPolicy(theta=dn), s, a)
            ) / (2 * h)
        denom = max(1e-8, float(np.max(np.abs(fd))))
        assert np.max(np.abs(g - fd)) / denom <= 1e-6


def test_sampling_frequency():
    pol = dr.LogisticPolicy(theta=np.zeros(2))
    rng = np.random.default_rng(11)
    draws = dr.sample_actions(pol, np.zeros((100_000, 2)), rng)
    assert 0.495 <= draws.mean() <= 0.505

    strong = dr.LogisticPolicy(theta=np.array([10.0, 0.0]))
    draws = dr.sample_actions(strong, np.tile([2.0, 0.0], (10_000, 1)), np.random.default_rng(3))
    assert draws.mean() >= 0.999


def test_sampling_deterministic_given_seed():
    pol = dr.LogisticPolicy(theta=np.array([0.7, -0.7]))
    states = np.random.default_rng(5).standard_normal((500, 2))
    a1 = dr.sample_actions(pol, states, np.random.default_rng(42))
    a2 = dr.sample_actions(pol, states, np.random.default_rng(42))
    assert np.array_equal(a1, a2)
    single = dr.sample_action(pol, states[0], np.random.default_rng(42))
    assert single in (0, 1)


def test_project_box():
    assert np.allclose(dr.project_box(np.array([12.0, -3.0]), 10.0), [10.0, -3.0])
    assert np.allclose(dr.project_box(np.array([1.0, -2.0]), 10.0), [1.0, -2.0])
    assert np.allclose(dr.project_box(np.array([-1e9, 0.0]), 10.0), [-10.0, 0.0])


def test_box_invariant_enforced():
    with pytest.raises(ValidationError, match="box"):
        dr.LogisticPolicy(theta=np.array([11.0, 0.0]), c0=10.0)
    with pytest.raises(ValidationError):
        dr.LogisticPolicy(theta=np.array([1.0]), c0=-1.0)


def test_invalid_action_index():
    pol = dr.LogisticPolicy(theta=np.zeros(2))
    with pytest.raises(ValidationError):
        dr.action_prob(pol, np.zeros(2), 2)


def test_json_round_trip():
    pol = dr.LogisticPolicy(theta=np.array([0.25, -9.5]), c0=10.0)
    text = pol.to_json()
    obj = json.loads(text)
    assert set(obj) == {"theta", "c0"}
    back = dr.LogisticPolicy.from_json(text)
    assert np.array_equal(back.theta, pol.theta)
    assert back.c0 == pol.c0
