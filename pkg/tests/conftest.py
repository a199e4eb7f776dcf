"""Shared fixtures: small simulated datasets, finite test chains, and the
tabular plug-in estimator used by the rate/coverage experiments."""

import numpy as np
import pytest

import drpolicy as dr


@pytest.fixture(scope="session")
def small_dataset():
    return dr.simulate_training_data(dr.SimConfig(n_episodes=5, horizon=8, seed=3))


@pytest.fixture(scope="session")
def small_spec(small_dataset):
    return dr.default_kernel_spec(small_dataset)


@pytest.fixture(scope="session")
def test_chain():
    """Ergodic 3-state, 2-action chain with a non-uniform target policy."""
    rng = np.random.default_rng(7)
    mdp = dr.random_ergodic_mdp(rng, 3, 2)
    target = dr.random_tabular_policy(rng, 3, 2)
    behavior = dr.TabularPolicy(probs=np.full((3, 2), 0.5))
    return mdp, target, behavior


def tabular_plugin_estimate(data, target, n_states, n_actions, beta, c):
    """Doubly-robust estimate with both nuisances estimated from the data.

    The transition kernel and rewards are estimated by empirical counts;
    the relative-value difference and the density ratio then come from the
    exact solvers applied to the estimated model.  Returns (m_hat, ci95).
    """
    S, A, R, Sn = dr.flatten_arrays(data)
    s = S[:, 0].astype(int)
    sn = Sn[:, 0].astype(int)
    n = len(s)
    counts = np.zeros((n_states, n_actions))
    trans = np.zeros((n_states, n_actions, n_states))
    np.add.at(counts, (s, A), 1.0)
    np.add.at(trans, (s, A, sn), 1.0)
    P_hat = np.where(counts[:, :, None] > 0, trans / np.maximum(counts[:, :, None], 1.0), 1.0 / n_states)
    P_hat /= P_hat.sum(axis=2, keepdims=True)
    R_hat = np.zeros(n_states)
    for state in range(n_states):
        mask = s == state
        if mask.any():
            R_hat[state] = R[mask][0]
    est_mdp = dr.FiniteMDP(P=P_hat, R=R_hat)
    _, Q = dr.exact_relative_value(est_mdp, target, beta, c)
    U = dr.relative_value_difference(est_mdp, target, Q)
    u = U[s, A, sn]
    d_target = dr.stationary_distribution(est_mdp, target)
    freq = counts / n
    omega_table = np.where(freq > 0, d_target[:, None] * target.probs / np.maximum(freq, 1e-12), 0.0)
    omega = omega_table[s, A]
    r_beta = dr.modified_rewards(R, beta, c)
    m_hat = float(np.sum(omega * (r_beta + u)) / np.sum(omega))
    psi = dr.eif_values(omega, u, r_beta, m_hat)
    _, ci = dr.variance_and_ci(psi, m_hat)
    return m_hat, ci
