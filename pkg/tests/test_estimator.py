import numpy as np
import pytest

import drpolicy as dr
from drpolicy._validation import ValidationError
from drpolicy.nuisance import RatioFit, ValueFit


def _fits(omega, u):
    n = len(omega)
    e = np.asarray(omega, dtype=float)
    ratio = RatioFit(phi_hat=np.zeros(n), nu_hat=np.zeros(n), e_hat=e, omega_hat=e / e.mean())
    value = ValueFit(eta_hat=0.0, alpha_hat=np.zeros(n), u_hat=np.asarray(u, dtype=float))
    return value, ratio


def test_unit_weights_zero_u_gives_plain_mean():
    rb = np.array([0.2, -0.4, 1.0, 0.6])
    value, ratio = _fits(np.ones(4), np.zeros(4))
    assert dr.robust_objective_estimate(value, ratio, rb) == pytest.approx(rb.mean(), abs=1e-15)


def test_constant_rewards_give_modified_constant():
    r0, beta, c = 5.0, 7.0, 0.25
    rb = dr.modified_rewards(np.full(6, r0), beta, c)
    expected = beta - (beta - r0) / (1 - c)
    value, ratio = _fits(np.random.default_rng(0).uniform(0.5, 2.0, 6), np.zeros(6))
    assert dr.robust_objective_estimate(value, ratio, rb) == pytest.approx(expected, rel=1e-12)


def test_eif_root_property():
    rng = np.random.default_rng(1)
    n = 50
    omega = rng.uniform(0.2, 3.0, n)
    u = rng.standard_normal(n)
    rb = rng.standard_normal(n)
    value, ratio = _fits(omega, u)
    m = dr.robust_objective_estimate(value, ratio, rb)
    psi = dr.eif_values(ratio.omega_hat, u, rb, m)
    assert abs(psi.mean()) <= 1e-10


def test_eif_zero_when_centered():
    rb = np.full(5, 1.3)
    psi = dr.eif_values(np.ones(5), np.zeros(5), rb, 1.3)
    assert np.all(psi == 0.0)


def test_eif_shape_mismatch_raises():
    with pytest.raises(ValidationError):
        dr.eif_values(np.ones(3), np.zeros(4), np.zeros(3), 0.0)


def test_variance_and_ci_hand_values():
    sigma2, ci = dr.variance_and_ci(np.zeros(10), 2.0)
    assert sigma2 == 0.0
    assert ci == (2.0, 2.0)
    sigma2, ci = dr.variance_and_ci(np.array([1.0, -1.0]), 0.5)
    assert sigma2 == 1.0
    half = 1.96 / np.sqrt(2)
    assert ci == pytest.approx((0.5 - half, 0.5 + half), rel=1e-12)


def test_ratio_form_matches_eif_form(small_dataset, small_spec):
    pol = dr.LogisticPolicy(theta=np.array([0.5, -0.5]))
    L = dr.assemble_gram(small_dataset, small_spec)
    K = dr.assemble_policy_kernel(small_dataset, pol, small_spec)
    n = small_dataset.n_transitions
    lam = mu = 0.02 * n
    _, _, R, _ = dr.flatten_arrays(small_dataset)
    rb = dr.modified_rewards(R, 0.4, 0.2)
    vfit = dr.fit_value_difference(L, K, rb, lam, mu)
    rfit = dr.fit_ratio(L, K, lam, mu)
    eif_form = dr.robust_objective_estimate(vfit, rfit, rb)
    ratio_form = (rfit.nu_hat @ L @ (rb - K @ vfit.alpha_hat)) / (rfit.nu_hat @ L @ np.ones(n))
    assert eif_form == pytest.approx(ratio_form, abs=1e-12)


def test_scale_invariance_of_normalization():
    rng = np.random.default_rng(2)
    n = 12
    e = rng.uniform(0.1, 2.0, n)
    u = rng.standard_normal(n)
    rb = rng.standard_normal(n)
    base_value, base_ratio = _fits(e, u)
    m1 = dr.robust_objective_estimate(base_value, base_ratio, rb)
    scaled_value, scaled_ratio = _fits(17.3 * e, u)
    m2 = dr.robust_objective_estimate(scaled_value, scaled_ratio, rb)
    assert m1 == pytest.approx(m2, abs=1e-12)


def test_evaluate_objective_bundles(small_dataset, small_spec):
    pol = dr.LogisticPolicy(theta=np.array([0.1, 0.3]))
    L = dr.assemble_gram(small_dataset, small_spec)
    K = dr.assemble_policy_kernel(small_dataset, pol, small_spec)
    n = small_dataset.n_transitions
    lam = mu = 0.05 * n
    _, _, R, _ = dr.flatten_arrays(small_dataset)
    rb = dr.modified_rewards(R, 0.2, 0.1)
    out = dr.evaluate_objective(
        dr.fit_value_difference(L, K, rb, lam, mu), dr.fit_ratio(L, K, lam, mu), rb
    )
    assert out.ci95[0] <= out.m_hat <= out.ci95[1]
    assert out.sigma2_hat >= 0.0
    half = 1.96 * np.sqrt(out.sigma2_hat / n)
    assert out.ci95 == pytest.approx((out.m_hat - half, out.m_hat + half), rel=1e-12)
    assert abs(out.psi.mean()) <= 1e-10


def test_double_robustness_probe_paths(test_chain):
    mdp, target, behavior = test_chain
    beta, c = 0.7, 0.3
    M_exact = dr.exact_M(mdp, target, beta, c)
    data = dr.simulate_finite_mdp(mdp, behavior, n=400, t0=20, rng=np.random.default_rng(5))
    m_u = dr.double_robustness_probe(data, beta, c, mdp, target, behavior, "oracle_u_wrong_omega")
    m_w = dr.double_robustness_probe(data, beta, c, mdp, target, behavior, "oracle_omega_wrong_u")
    assert abs(m_u - M_exact) <= 0.05
    assert abs(m_w - M_exact) <= 0.05
    with pytest.raises(ValidationError):
        dr.double_robustness_probe(data, beta, c, mdp, target, behavior, "nonsense")


def test_both_oracle_nuisances_give_unbiased_estimate(test_chain):
    mdp, target, behavior = test_chain
    beta, c = 0.4, 0.2
    M_exact = dr.exact_M(mdp, target, beta, c)
    _, Q = dr.exact_relative_value(mdp, target, beta, c)
    U = dr.relative_value_difference(mdp, target, Q)
    omega_table = dr.exact_ratio(mdp, target, behavior)
    vals = []
    for rep in range(20):
        data = dr.simulate_finite_mdp(mdp, behavior, n=100, t0=20, rng=np.random.default_rng(900 + rep))
        S, A, R, Sn = dr.flatten_arrays(data)
        s = S[:, 0].astype(int)
        sn = Sn[:, 0].astype(int)
        rb = dr.modified_rewards(R, beta, c)
        omega = omega_table[s, A]
        u = U[s, A, sn]
        vals.append(np.sum(omega * (rb + u)) / np.sum(omega))
    se = np.std(vals) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - M_exact) <= 4 * se + 1e-3
