"""Coupled kernel estimators of the two nuisance functions.

Both nuisances are nested penalized kernel regressions sharing the same
projection structure.  With L the Gram matrix of the projection space,
Ktilde(pi) the policy-shifted Gram matrix, and M = (L+mu1 I)^-1 L^2
(L+mu1 I)^-1 the fitted-projection operator, the value-difference route
minimizes

    (Rb - eta 1 - Ktilde a)^T M (Rb - eta 1 - Ktilde a) + lambda1 a^T Ktilde a

jointly over (eta, a).  The first-order conditions are re-derived from this
quadratic (the stationarity system below is sufficient for optimality and
pins down one global minimizer even when Ktilde is singular):

    1^T M 1 eta = 1^T M (Rb - Ktilde a)
    (M Ktilde + lambda1 I) a = M (Rb - eta 1)

The fitted value-difference at the data is u = -Ktilde a.  The ratio route
solves (M2 Ktilde + lambda2 I) phi = M2 1 and (L + mu2 I) nu = 1 - Ktilde phi,
yielding the scaled ratio e = L nu, normalized to unit mean.

Theta-derivatives of all coefficient vectors follow from differentiating
these linear systems (only Ktilde depends on theta), so policy-gradient
evaluation reuses the factorizations of the fits.

All lambda/mu arguments of the solvers are the absolute penalties entering
the linear systems; user-facing per-transition rates live in TuningParams
and are multiplied by N before use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from ._validation import ValidationError
from .kernels import GramCache


class FitError(RuntimeError):
    """A nuisance linear system could not be solved to tolerance."""


@dataclass(frozen=True)
class TuningParams:
    """Per-transition penalty rates (lambda_jN, mu_jN in the estimators).

    scaled(n) returns the absolute penalties lambda_j = lambda_jN * n,
    mu_j = mu_jN * n that enter the linear systems.
    """

    lambda1: float
    mu1: float
    lambda2: float
    mu2: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")
        for name in ("mu1", "mu2"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")

    def scaled(self, n_transitions: int) -> tuple[float, float, float, float]:
        n = float(n_transitions)
        return self.lambda1 * n, self.mu1 * n, self.lambda2 * n, self.mu2 * n


def default_tuning(n_transitions: int) -> TuningParams:
    """Fallback rates ~ N^(-2/3), the theory-suggested decay for smooth
    problems; cross-validation should be preferred when affordable."""
    rate = float(n_transitions) ** (-2.0 / 3.0)
    return TuningParams(lambda1=rate, mu1=rate, lambda2=rate, mu2=rate)


@dataclass(frozen=True)
class ValueFit:
    """Closed-form value-difference fit at one (policy, beta)."""

    eta_hat: float
    alpha_hat: np.ndarray
    u_hat: np.ndarray


@dataclass(frozen=True)
class RatioFit:
    """Closed-form stationary density-ratio fit at one policy."""

    phi_hat: np.ndarray
    nu_hat: np.ndarray
    e_hat: np.ndarray
    omega_hat: np.ndarray


def modified_rewards(rewards, beta: float, c: float) -> np.ndarray:
    """Entrywise beta - (beta - r)_+ / (1 - c)."""
    if not 0.0 <= c < 1.0:
        raise ValidationError(f"robustness level c must be in [0, 1), got {c}")
    r = np.asarray(rewards, dtype=float)
    return beta - np.maximum(beta - r, 0.0) / (1.0 - c)


def _chol_with_jitter(mat: np.ndarray, context: str):
    """Cholesky of a nominally-PSD matrix, retrying once with a trace-scaled
    diagonal jitter; Gaussian Grams on clustered data are rank deficient."""
    try:
        return cho_factor(mat, lower=True)
    except np.linalg.LinAlgError:
        n = mat.shape[0]
        jitter = 1e-10 * np.trace(mat) / n + 1e-300
        try:
            return cho_factor(mat + jitter * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            raise FitError(f"factorization failure after jitter in {context}") from exc


def build_projection(L: np.ndarray, mu1: float) -> np.ndarray:
    """M = (L + mu1 I)^-1 L^2 (L + mu1 I)^-1 via one symmetric factorization."""
    if mu1 <= 0:
        raise ValidationError("mu1 must be positive")
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    factor = _chol_with_jitter(L + mu1 * np.eye(n), "build_projection")
    C = cho_solve(factor, L)  # (L + mu1 I)^-1 L
    M = C @ C.T
    return 0.5 * (M + M.T)


def make_gram_cache(d, policy, spec, mu1: float) -> GramCache:
    """Assemble the (L, Ktilde, M) substrate for one dataset and policy.

    ``mu1`` is the absolute projection penalty (already scaled by N).
    """
    from .kernels import assemble_gram, assemble_policy_kernel

    L = assemble_gram(d, spec)
    Ktilde = assemble_policy_kernel(d, policy, spec)
    return GramCache(L=L, Ktilde=Ktilde, M=build_projection(L, mu1))


def _value_system(M: np.ndarray, Ktilde: np.ndarray, lambda1: float) -> np.ndarray:
    """(N+1) x (N+1) stationarity matrix of the joint (eta, alpha) fit."""
    n = M.shape[0]
    ones = np.ones(n)
    M1 = M @ ones
    A = np.empty((n + 1, n + 1))
    A[0, 0] = ones @ M1
    A[0, 1:] = Ktilde @ M1  # = 1^T M Ktilde, M symmetric
    A[1:, 0] = M1
    A[1:, 1:] = M @ Ktilde + lambda1 * np.eye(n)
    return A


def fit_value_difference(
    L: np.ndarray,
    Ktilde: np.ndarray,
    r_beta: np.ndarray,
    lambda1: float,
    mu1: float,
    *,
    projection: np.ndarray | None = None,
    tol_solve: float = 1e-6,
) -> ValueFit:
    """Solve the joint stationarity system of the value-difference objective.

    Args:
        L, Ktilde: Gram matrices in flatten order.
        r_beta: modified rewards R^beta at the transitions.
        lambda1, mu1: absolute penalties.
        projection: optional precomputed build_projection(L, mu1).
        tol_solve: bound on the stationarity residuals, scaled by 1 + ||r_beta||.

    Returns:
        ValueFit with eta_hat, alpha_hat and u_hat = -Ktilde alpha_hat.
    """
    r_beta = np.asarray(r_beta, dtype=float)
    M = build_projection(L, mu1) if projection is None else projection
    n = M.shape[0]
    ones = np.ones(n)
    s = ones @ M @ ones
    if not s > 0:
        raise FitError("projection matrix annihilates constants (1^T M 1 <= 0)")
    A = _value_system(M, Ktilde, lambda1)
    Mr = M @ r_beta
    rhs = np.concatenate([[ones @ Mr], Mr])
    try:
        x = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular joint system in fit_value_difference") from exc
    eta = float(x[0])
    alpha = x[1:]
    resid = M @ (r_beta - eta * ones - Ktilde @ alpha)
    scale = 1.0 + float(np.linalg.norm(r_beta))
    cert1 = abs(ones @ resid)
    cert2 = float(np.linalg.norm(Ktilde @ (resid - lambda1 * alpha)))
    if cert1 > tol_solve * scale or cert2 > tol_solve * scale:
        raise FitError(
            f"value fit stationarity residuals {cert1:.3g}, {cert2:.3g} "
            f"exceed {tol_solve:.3g} * {scale:.3g}"
        )
    return ValueFit(eta_hat=eta, alpha_hat=alpha, u_hat=-(Ktilde @ alpha))


def fit_ratio(
    L: np.ndarray,
    Ktilde: np.ndarray,
    lambda2: float,
    mu2: float,
    *,
    projection: np.ndarray | None = None,
    l_factor=None,
) -> RatioFit:
    """Solve the two chained ratio systems and normalize to unit mean.

    ``projection`` must be build_projection(L, mu2) when supplied;
    ``l_factor`` an existing Cholesky factor of L + mu2 I.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    M = build_projection(L, mu2) if projection is None else projection
    ones = np.ones(n)
    try:
        phi = np.linalg.solve(M @ Ktilde + lambda2 * np.eye(n), M @ ones)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular system for the ratio coefficients") from exc
    if l_factor is None:
        l_factor = _chol_with_jitter(L + mu2 * np.eye(n), "fit_ratio")
    nu = cho_solve(l_factor, ones - Ktilde @ phi)
    e = L @ nu
    mean_e = float(np.mean(e))
    if abs(mean_e) < 1e-8:
        raise FitError("degenerate ratio normalization (mean of scaled ratio ~ 0)")
    return RatioFit(phi_hat=phi, nu_hat=nu, e_hat=e, omega_hat=e / mean_e)


def value_fit_gradient(
    fit: ValueFit,
    grams: GramCache,
    dKtilde_dtheta: np.ndarray,
    lambda1: float,
    *,
    system_lu=None,
):
    """Implicit-theorem derivatives of the value fit.

    grams.M must be the mu1 projection used in the fit.  Returns
    (dalpha, du), each (N, p), where du = d(u_hat)/dtheta.
    """
    dK = np.asarray(dKtilde_dtheta, dtype=float)
    n, _, p = dK.shape
    M, Ktilde = grams.M, grams.Ktilde
    ones = np.ones(n)
    if system_lu is None:
        system_lu = lu_factor(_value_system(M, Ktilde, lambda1))
    # Differentiating both stationarity equations in theta_k:
    #   1^T M 1 deta + 1^T M (dK a + Ktilde da) = 0
    #   M dK a + (M Ktilde + lambda1 I) da + M 1 deta = 0
    v = np.einsum("hjk,j->hk", dK, fit.alpha_hat)  # dK_k @ alpha, (N, p)
    Mv = M @ v
    rhs = np.vstack([-(ones @ Mv)[None, :], -Mv])
    try:
        sol = lu_solve(system_lu, rhs)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian of the value stationarity system") from exc
    dalpha = sol[1:, :]
    du = -v - Ktilde @ dalpha
    return dalpha, du


def ratio_fit_gradient(
    fit: RatioFit,
    grams: GramCache,
    dKtilde_dtheta: np.ndarray,
    lambda2: float,
    mu2: float,
    *,
    projection: np.ndarray | None = None,
    ratio_lu=None,
    l_factor=None,
) -> np.ndarray:
    """Implicit-theorem derivative d(nu_hat)/dtheta, shape (N, p).

    ``projection`` defaults to grams.M and must be the mu2 projection.
    """
    dK = np.asarray(dKtilde_dtheta, dtype=float)
    n = dK.shape[0]
    L, Ktilde = grams.L, grams.Ktilde
    M = grams.M if projection is None else projection
    if ratio_lu is None:
        ratio_lu = lu_factor(M @ Ktilde + lambda2 * np.eye(n))
    if l_factor is None:
        l_factor = _chol_with_jitter(L + mu2 * np.eye(n), "ratio_fit_gradient")
    v = np.einsum("hjk,j->hk", dK, fit.phi_hat)  # dK_k @ phi, (N, p)
    dphi = lu_solve(ratio_lu, -(M @ v))
    dnu = cho_solve(l_factor, -(v + Ktilde @ dphi))
    return dnu
