"""Doubly-robust estimation of the robust objective, with EIF-based inference.

The estimate solves the empirical influence-function root

    mean_h  omega_h (Rb_h + u_h - m) = 0,

so m = sum omega (Rb + u) / sum omega; consistency requires only one of the
two plugged-in nuisances to be right.  The influence values psi_h =
omega_h (Rb_h + u_h - m) supply the plug-in variance mean(psi^2) and the
normal confidence interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError
from .data import Dataset, flatten_arrays
from .nuisance import RatioFit, ValueFit, modified_rewards


@dataclass(frozen=True)
class ObjectiveValue:
    """Point estimate, influence values, variance and 95% CI."""

    m_hat: float
    psi: np.ndarray
    sigma2_hat: float
    ci95: tuple[float, float]


def robust_objective_estimate(value: ValueFit, ratio: RatioFit, r_beta) -> float:
    """Ratio-weighted mean of the augmented modified rewards."""
    r_beta = np.asarray(r_beta, dtype=float)
    w = ratio.omega_hat
    denom = float(np.sum(w))
    if abs(denom) < 1e-8 * w.shape[0]:
        raise ValidationError("degenerate denominator in the objective estimate")
    m = float(np.sum(w * (r_beta + value.u_hat)) / denom)
    if not np.isfinite(m):
        raise ValidationError("non-finite objective estimate")
    return m


def eif_values(omega, u, r_beta, eta: float) -> np.ndarray:
    """psi_h = omega_h (r_beta_h + u_h - eta)."""
    omega = np.asarray(omega, dtype=float)
    u = np.asarray(u, dtype=float)
    r_beta = np.asarray(r_beta, dtype=float)
    if not omega.shape == u.shape == r_beta.shape:
        raise ValidationError("omega, u and r_beta must have equal lengths")
    return omega * (r_beta + u - eta)


def variance_and_ci(psi, m_hat: float) -> tuple[float, tuple[float, float]]:
    """Plug-in variance mean(psi^2) and m_hat +- 1.96 sigma / sqrt(N).

    mean(psi^2) rather than the sample variance: the influence values have
    exactly zero mean at the estimating-equation root, so the two differ by
    O(1/N).
    """
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0]
    if n < 2:
        raise ValidationError("variance needs at least 2 influence values")
    sigma2 = float(np.mean(psi**2))
    half = 1.96 * np.sqrt(sigma2 / n)
    return sigma2, (m_hat - half, m_hat + half)


def evaluate_objective(value: ValueFit, ratio: RatioFit, r_beta) -> ObjectiveValue:
    """Bundle the point estimate with its influence-based inference."""
    m = robust_objective_estimate(value, ratio, r_beta)
    psi = eif_values(ratio.omega_hat, value.u_hat, np.asarray(r_beta, dtype=float), m)
    sigma2, ci = variance_and_ci(psi, m)
    return ObjectiveValue(m_hat=m, psi=psi, sigma2_hat=sigma2, ci95=ci)


def _weighted_estimate(omega, u, r_beta) -> float:
    return float(np.sum(omega * (r_beta + u)) / np.sum(omega))


def double_robustness_probe(
    data: Dataset,
    beta: float,
    c: float,
    mdp,
    target,
    behavior,
    which: str,
) -> float:
    """Objective estimate with one oracle nuisance and one misspecified one.

    ``data`` must come from the finite MDP ``mdp`` under ``behavior`` (states
    are state indices stored as floats).  ``which`` selects the probe:
    'oracle_u_wrong_omega' pairs the exact relative-value difference with
    omega = 1; 'oracle_omega_wrong_u' pairs the exact ratio with u = 0.
    """
    from .oracle import exact_ratio, exact_relative_value, relative_value_difference

    if which not in ("oracle_u_wrong_omega", "oracle_omega_wrong_u"):
        raise ValidationError(f"unknown probe {which!r}")
    S, A, R, S_next = flatten_arrays(data)
    if data.p != 1:
        raise ValidationError("finite-MDP datasets store the state index in one column")
    s_idx = S[:, 0].astype(int)
    sn_idx = S_next[:, 0].astype(int)
    r_beta = modified_rewards(R, beta, c)
    n = r_beta.shape[0]

    if which == "oracle_u_wrong_omega":
        _, Q = exact_relative_value(mdp, target, beta, c)
        U = relative_value_difference(mdp, target, Q)
        u = U[s_idx, A, sn_idx]
        omega = np.ones(n)
    else:
        omega_table = exact_ratio(mdp, target, behavior)
        omega = omega_table[s_idx, A]
        u = np.zeros(n)
    return _weighted_estimate(omega, u, r_beta)
