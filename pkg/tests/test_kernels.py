import numpy as np
import pytest

import drpolicy as dr
from drpolicy._validation import ValidationError
from drpolicy.kernels import PolicyKernelBuilder, cross_policy_kernel, gaussian_gram


def _spec(bandwidth=1.0, ref_state=(0.0, 0.0), ref_action=0):
    return dr.KernelSpec(bandwidth=bandwidth, ref_state=np.asarray(ref_state), ref_action=ref_action)


def test_median_heuristic_hand_values():
    assert dr.median_heuristic_bandwidth(np.array([[0.0], [1.0], [3.0]])) == 2.0
    assert dr.median_heuristic_bandwidth(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0


def test_median_heuristic_full_sort_oracle(small_dataset):
    S, _, _, _ = dr.flatten_arrays(small_dataset)
    sigma = dr.median_heuristic_bandwidth(S)
    dists = sorted(
        float(np.linalg.norm(S[i] - S[j])) for i in range(len(S)) for j in range(i + 1, len(S))
    )
    assert sigma > 0 and np.isfinite(sigma)
    assert sigma == pytest.approx(np.median(dists), abs=0.0)


def test_median_heuristic_degenerate():
    with pytest.raises(ValidationError, match="degenerate|2 points"):
        dr.median_heuristic_bandwidth(np.zeros((5, 2)))


def test_state_action_kernel_values():
    spec = _spec(bandwidth=2.0)
    s = np.array([1.0, -1.0])
    assert dr.state_action_kernel((s, 0), (s, 1), spec) == 0.0
    assert dr.state_action_kernel((s, 1), (s, 1), spec) == 1.0
    shifted = s + np.array([2.0, 0.0])  # distance sigma
    assert dr.state_action_kernel((s, 0), (shifted, 0), spec) == pytest.approx(np.exp(-0.5), rel=1e-15)


def test_shifted_kernel_reference_nullity():
    spec = _spec(bandwidth=1.5, ref_state=(0.3, -0.2), ref_action=1)
    ref = (spec.ref_state, spec.ref_action)
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = (rng.standard_normal(2), int(rng.integers(0, 2)))
        assert dr.shifted_kernel(ref, w, spec) == pytest.approx(0.0, abs=1e-15)
        assert dr.shifted_kernel(w, ref, spec) == pytest.approx(0.0, abs=1e-15)
    assert dr.shifted_kernel(ref, ref, spec) == 0.0


def test_shifted_kernel_four_term_oracle():
    spec = _spec(bandwidth=0.8, ref_state=(0.5, 0.1), ref_action=0)
    rng = np.random.default_rng(3)
    ref = (spec.ref_state, spec.ref_action)
    for _ in range(25):
        w1 = (rng.standard_normal(2), int(rng.integers(0, 2)))
        w2 = (rng.standard_normal(2), int(rng.integers(0, 2)))
        expected = (
            dr.state_action_kernel(w1, w2, spec)
            - dr.state_action_kernel(ref, w2, spec)
            - dr.state_action_kernel(w1, ref, spec)
            + dr.state_action_kernel(ref, ref, spec)
        )
        assert dr.shifted_kernel(w1, w2, spec) == pytest.approx(expected, abs=1e-15)
        assert dr.shifted_kernel(w2, w1, spec) == pytest.approx(dr.shifted_kernel(w1, w2, spec), abs=1e-15)


def test_assemble_gram_against_double_loop():
    rng = np.random.default_rng(8)
    d = dr.simulate_training_data(dr.SimConfig(n_episodes=4, horizon=5, seed=9))
    spec = dr.default_kernel_spec(d)
    L = dr.assemble_gram(d, spec)
    S, A, _, _ = dr.flatten_arrays(d)
    n = len(S)
    oracle = np.empty((n, n))
    for h in range(n):
        for j in range(n):
            oracle[h, j] = dr.state_action_kernel((S[h], A[h]), (S[j], A[j]), spec)
    assert np.max(np.abs(L - oracle)) <= 1e-12
    assert np.max(np.abs(L - L.T)) <= 1e-12
    # duplicate rows: a gram of identical pairs has identical rows
    d2 = dr.Dataset(
        states=np.repeat(d.states[:1], 2, axis=0),
        actions=np.repeat(d.actions[:1], 2, axis=0),
        rewards=np.repeat(d.rewards[:1], 2, axis=0),
    )
    L2 = dr.assemble_gram(d2, spec)
    h, j = 0, d2.t0  # same transition from the duplicated episode
    assert np.allclose(L2[h, :], L2[j, :], atol=1e-15)


def test_gram_single_transition():
    d = dr.Dataset(
        states=np.array([[[0.0], [1.0]]]), actions=np.array([[1]]), rewards=np.array([[0.5]])
    )
    spec = _spec(bandwidth=1.0, ref_state=(0.0,), ref_action=1)
    L = dr.assemble_gram(d, spec)
    assert L.shape == (1, 1)
    assert L[0, 0] == 1.0


def _policy_kernel_oracle(d, policy, spec):
    S, A, _, Sn = dr.flatten_arrays(d)
    probs = policy.action_probs(Sn)
    n = len(S)
    n_actions = probs.shape[1]
    K = np.empty((n, n))
    for h in range(n):
        for j in range(n):
            val = dr.shifted_kernel((S[h], A[h]), (S[j], A[j]), spec)
            for a in range(n_actions):
                val -= probs[h, a] * dr.shifted_kernel((Sn[h], a), (S[j], A[j]), spec)
                val -= probs[j, a] * dr.shifted_kernel((Sn[j], a), (S[h], A[h]), spec)
            for a in range(n_actions):
                for b in range(n_actions):
                    val += probs[h, a] * probs[j, b] * dr.shifted_kernel((Sn[h], a), (Sn[j], b), spec)
            K[h, j] = val
    return K


def test_policy_kernel_against_double_loop():
    d = dr.simulate_training_data(dr.SimConfig(n_episodes=1, horizon=5, seed=4))
    spec = dr.default_kernel_spec(d)
    pol = dr.LogisticPolicy(theta=np.array([0.0, 0.0]))  # uniform over 2 actions
    K = dr.assemble_policy_kernel(d, pol, spec)
    oracle = _policy_kernel_oracle(d, pol, spec)
    assert np.max(np.abs(K - oracle)) <= 1e-12

    pol2 = dr.LogisticPolicy(theta=np.array([1.3, -0.7]))
    K2 = dr.assemble_policy_kernel(d, pol2, spec)
    oracle2 = _policy_kernel_oracle(d, pol2, spec)
    assert np.max(np.abs(K2 - oracle2)) <= 1e-12


def test_policy_kernel_deterministic_collapse():
    d = dr.simulate_training_data(dr.SimConfig(n_episodes=2, horizon=4, seed=5))
    spec = dr.default_kernel_spec(d)
    S, A, _, Sn = dr.flatten_arrays(d)

    class _Deterministic:
        n_actions = 2

        def action_probs(self, states):
            out = np.zeros((len(states), 2))
            out[:, 0] = 1.0
            return out

    K = dr.assemble_policy_kernel(d, _Deterministic(), spec)
    for h in range(len(S)):
        expected = (
            dr.shifted_kernel((S[h], A[h]), (S[h], A[h]), spec)
            - 2.0 * dr.shifted_kernel((Sn[h], 0), (S[h], A[h]), spec)
            + dr.shifted_kernel((Sn[h], 0), (Sn[h], 0), spec)
        )
        assert K[h, h] == pytest.approx(expected, abs=1e-12)


def test_policy_kernel_psd_and_symmetric(small_dataset, small_spec):
    pol = dr.LogisticPolicy(theta=np.array([0.8, -1.2]))
    K = dr.assemble_policy_kernel(small_dataset, pol, small_spec)
    assert np.max(np.abs(K - K.T)) <= 1e-12
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = rng.standard_normal(K.shape[0])
        assert v @ K @ v >= -1e-10
    L = dr.assemble_gram(small_dataset, small_spec)
    jitter = 1e-10 * np.trace(L) / L.shape[0]
    assert np.linalg.eigvalsh(L + jitter * np.eye(L.shape[0])).min() >= -1e-12


def test_policy_kernel_rejects_bad_probs(small_dataset, small_spec):
    builder = PolicyKernelBuilder(small_dataset, small_spec)
    bad = np.full((small_dataset.n_transitions, 2), 0.7)
    with pytest.raises(ValidationError, match="probability"):
        builder.ktilde(bad)


def test_cross_policy_kernel_consistency(small_dataset, small_spec):
    pol = dr.LogisticPolicy(theta=np.array([0.4, 0.9]))
    K = dr.assemble_policy_kernel(small_dataset, pol, small_spec)
    K_cross = cross_policy_kernel(small_dataset, small_dataset, pol, small_spec)
    assert np.max(np.abs(K - K_cross)) <= 1e-12


def test_ktilde_grad_matches_finite_differences(small_dataset, small_spec):
    builder = PolicyKernelBuilder(small_dataset, small_spec)
    Sn = builder.S_next
    theta = np.array([0.6, -0.4])
    pol = dr.LogisticPolicy(theta=theta)
    dK = builder.ktilde_grad(pol.action_probs(Sn), pol.action_prob_grads(Sn))
    h = 1e-6
    for k in range(2):
        up = theta.copy()
        up[k] += h
        dn = theta.copy()
        dn[k] -= h
        K_up = builder.ktilde(dr.LogisticPolicy(theta=up).action_probs(Sn))
        K_dn = builder.ktilde(dr.LogisticPolicy(theta=dn).action_probs(Sn))
        fd = (K_up - K_dn) / (2 * h)
        assert np.max(np.abs(dK[:, :, k] - fd)) <= 1e-7


def test_projection_on_diagonal_gram():
    diag = np.array([2.0, 0.5, 1.0, 3.0])
    L = np.diag(diag)
    M = dr.build_projection(L, 1.0)
    assert np.allclose(M, np.diag(diag**2 / (diag + 1.0) ** 2), atol=1e-14)
    # shares eigenvectors with L, so they commute
    assert np.allclose(M @ L, L @ M, atol=1e-13)
    eigs = np.linalg.eigvalsh(M)
    assert eigs.min() >= -1e-14


def test_gram_cache_contents(small_dataset, small_spec):
    pol = dr.LogisticPolicy(theta=np.array([0.2, 0.1]))
    cache = dr.make_gram_cache(small_dataset, pol, small_spec, mu1=1.0)
    assert cache.L.shape == cache.Ktilde.shape == cache.M.shape
    assert np.max(np.abs(cache.M - cache.M.T)) <= 1e-12
    assert np.allclose(cache.L, dr.assemble_gram(small_dataset, small_spec))


def test_gaussian_gram_values():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    G = gaussian_gram(X, X, 1.0)
    assert G[0, 0] == 1.0
    assert G[0, 1] == pytest.approx(np.exp(-0.5), rel=1e-15)
