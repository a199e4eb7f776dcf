"""Block coordinate ascent over (beta, theta) for the robust objective.

The objective estimate is piecewise linear in beta with knots at the
observed rewards (the value-fit coefficients are linear in the modified
rewards), so the beta block is maximized exactly by scanning the observed
rewards plus the box endpoints; one matrix factorization serves all
candidates.  The theta block runs bounded L-BFGS-B with gradients obtained
by implicit differentiation of the two nuisance linear systems.  Restarts
from random box points guard against the non-convexity in theta.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, lu_factor, lu_solve
from scipy.optimize import minimize
from scipy.special import expit

from ._seeding import derived_rng
from ._validation import ValidationError
from .data import Dataset, flatten_arrays, reward_bounds
from .kernels import GramCache, KernelSpec, PolicyKernelBuilder, default_kernel_spec
from .nuisance import (
    FitError,
    RatioFit,
    TuningParams,
    ValueFit,
    _chol_with_jitter,
    _value_system,
    build_projection,
    modified_rewards,
    ratio_fit_gradient,
    value_fit_gradient,
)


@dataclass(frozen=True)
class OptimizerConfig:
    eps_tol: float = 1e-4
    max_outer_iters: int = 50
    n_restarts: int = 10
    theta_init_scale: float = 1.0
    use_analytic_gradients: bool = True
    seed: int = 0
    lbfgs_maxiter: int = 60
    threads: int = 1

    def __post_init__(self):
        if self.eps_tol <= 0:
            raise ValidationError("eps_tol must be positive")
        if self.n_restarts < 1 or self.max_outer_iters < 1:
            raise ValidationError("n_restarts and max_outer_iters must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    theta_hat: np.ndarray
    beta_hat: float
    objective: float
    trace: list = field(repr=False)
    restart_index: int = 0

    def to_dict(self) -> dict:
        return {
            "theta_hat": [float(x) for x in self.theta_hat],
            "beta_hat": float(self.beta_hat),
            "objective": float(self.objective),
            "restart_index": int(self.restart_index),
            "trace": self.trace,
        }


class RobustObjective:
    """Dataset-level cache for repeated objective/gradient evaluation.

    All matrices that do not depend on (theta, beta) are prepared once:
    the projection operators for both penalty levels, the Cholesky factor
    of L + mu2 I, and the policy-independent kernel blocks.
    """

    def __init__(
        self,
        dataset: Dataset,
        spec: KernelSpec,
        tuning: TuningParams,
        c: float,
        beta_box: tuple[float, float] | None = None,
    ):
        if not 0.0 <= c < 1.0:
            raise ValidationError(f"robustness level c must be in [0, 1), got {c}")
        self.c = float(c)
        self.spec = spec
        n = dataset.n_transitions
        self.lambda1, self.mu1, self.lambda2, self.mu2 = tuning.scaled(n)
        self.builder = PolicyKernelBuilder(dataset, spec)
        self.L = self.builder.L
        self.M1 = build_projection(self.L, self.mu1)
        self.M2 = self.M1 if self.mu2 == self.mu1 else build_projection(self.L, self.mu2)
        self.l_factor2 = _chol_with_jitter(self.L + self.mu2 * np.eye(n), "RobustObjective")
        self.S_next = self.builder.S_next
        _, _, self.rewards, _ = flatten_arrays(dataset)
        self.n = n
        lo, hi = beta_box if beta_box is not None else reward_bounds(dataset)
        if not lo <= hi:
            raise ValidationError("beta_box is empty")
        self.beta_box = (float(lo), float(hi))
        inside = np.unique(self.rewards)
        inside = inside[(inside >= lo) & (inside <= hi)]
        candidates = np.unique(np.concatenate([inside, [lo, hi]]))
        if candidates.size == 0:
            raise ValidationError("empty beta candidate set")
        self.beta_candidates = candidates
        self.p = self.S_next.shape[1]

    # -- policy pieces ----------------------------------------------------

    def _probs(self, theta) -> np.ndarray:
        p1 = expit(self.S_next @ theta)
        return np.column_stack([1.0 - p1, p1])

    def _prob_grads(self, theta) -> np.ndarray:
        p1 = expit(self.S_next @ theta)
        g1 = (p1 * (1.0 - p1))[:, None] * self.S_next
        out = np.empty((self.n, 2, self.p))
        out[:, 1, :] = g1
        out[:, 0, :] = -g1
        return out

    # -- nuisance pieces ---------------------------------------------------

    def ktilde(self, theta) -> np.ndarray:
        return self.builder.ktilde(self._probs(theta))

    def _ratio_parts(self, ktilde) -> tuple[RatioFit, tuple]:
        ratio_lu = lu_factor(self.M2 @ ktilde + self.lambda2 * np.eye(self.n))
        ones = np.ones(self.n)
        phi = lu_solve(ratio_lu, self.M2 @ ones)
        nu = cho_solve(self.l_factor2, ones - ktilde @ phi)
        e = self.L @ nu
        mean_e = float(np.mean(e))
        if abs(mean_e) < 1e-8:
            raise FitError("degenerate ratio normalization")
        fit = RatioFit(phi_hat=phi, nu_hat=nu, e_hat=e, omega_hat=e / mean_e)
        return fit, ratio_lu

    def _value_lu(self, ktilde):
        return lu_factor(_value_system(self.M1, ktilde, self.lambda1))

    def _value_fits_for_betas(self, ktilde, value_lu, betas) -> tuple[np.ndarray, np.ndarray]:
        """Joint-system solves for many beta candidates at once.

        Returns (etas (K,), alphas (N, K)); column k belongs to betas[k].
        """
        rb = np.stack([modified_rewards(self.rewards, b, self.c) for b in np.atleast_1d(betas)], axis=1)
        m_rb = self.M1 @ rb
        rhs = np.vstack([np.sum(m_rb, axis=0)[None, :], m_rb])
        sol = lu_solve(value_lu, rhs)
        return sol[0, :], sol[1:, :]

    # -- objective ---------------------------------------------------------

    def objective_for_betas(self, theta, betas) -> np.ndarray:
        """Objective estimates at one theta for an array of betas."""
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        ktilde = self.ktilde(theta)
        ratio, _ = self._ratio_parts(ktilde)
        value_lu = self._value_lu(ktilde)
        _, alphas = self._value_fits_for_betas(ktilde, value_lu, betas)
        rb = np.stack([modified_rewards(self.rewards, b, self.c) for b in betas], axis=1)
        e = ratio.e_hat
        denom = float(np.sum(e))
        if abs(denom) < 1e-8 * self.n:
            raise FitError("degenerate denominator in the objective")
        ek = ktilde @ e
        numer = e @ rb - ek @ alphas
        return numer / denom

    def beta_scan(self, theta) -> tuple[float, float]:
        """Exact beta maximization over the candidate set; leftmost winner."""
        vals = self.objective_for_betas(theta, self.beta_candidates)
        best = int(np.argmax(vals))
        # argmax returns the first (smallest-beta) maximizer on exact ties;
        # keep the leftmost within strict float comparison.
        return float(self.beta_candidates[best]), float(vals[best])

    def objective(self, theta, beta) -> float:
        return float(self.objective_for_betas(theta, [beta])[0])

    def objective_and_gradient(self, theta, beta) -> tuple[float, np.ndarray]:
        """Objective and its theta-gradient by implicit differentiation."""
        probs = self._probs(theta)
        grads = self._prob_grads(theta)
        ktilde = self.builder.ktilde(probs)
        dK = self.builder.ktilde_grad(probs, grads)
        grams1 = GramCache(L=self.L, Ktilde=ktilde, M=self.M1)
        rb = modified_rewards(self.rewards, beta, self.c)

        value_lu = self._value_lu(ktilde)
        m_rb = self.M1 @ rb
        sol = lu_solve(value_lu, np.concatenate([[np.sum(m_rb)], m_rb]))
        alpha = sol[1:]
        vfit = ValueFit(eta_hat=float(sol[0]), alpha_hat=alpha, u_hat=-(ktilde @ alpha))
        ratio, ratio_lu = self._ratio_parts(ktilde)

        dalpha, du = value_fit_gradient(vfit, grams1, dK, self.lambda1, system_lu=value_lu)
        dnu = ratio_fit_gradient(
            ratio, grams1, dK, self.lambda2, self.mu2,
            projection=self.M2, ratio_lu=ratio_lu, l_factor=self.l_factor2,
        )
        e = ratio.e_hat
        denom = float(np.sum(e))
        if abs(denom) < 1e-8 * self.n:
            raise FitError("degenerate denominator in the objective")
        resid = rb + vfit.u_hat
        numer = float(e @ resid)
        de = self.L @ dnu  # (N, p)
        dnumer = de.T @ resid + du.T @ e
        ddenom = de.sum(axis=0)
        grad = (dnumer * denom - numer * ddenom) / denom**2
        return numer / denom, grad

    def fd_gradient(self, theta, beta, h_scale: float = 1e-6) -> np.ndarray:
        """Central finite differences of the objective in theta."""
        theta = np.asarray(theta, dtype=float)
        grad = np.empty_like(theta)
        for k in range(theta.shape[0]):
            h = h_scale * (1.0 + abs(theta[k]))
            up = theta.copy()
            up[k] += h
            dn = theta.copy()
            dn[k] -= h
            grad[k] = (self.objective(up, beta) - self.objective(dn, beta)) / (2.0 * h)
        return grad


def maximize_beta(
    dataset: Dataset,
    theta,
    spec: KernelSpec,
    tuning: TuningParams,
    c: float,
    beta_box: tuple[float, float] | None = None,
) -> tuple[float, float]:
    """Exact beta block: scan observed rewards (plus box endpoints) with a
    full nuisance refit per candidate; ties go to the smallest beta."""
    engine = RobustObjective(dataset, spec, tuning, c, beta_box=beta_box)
    return engine.beta_scan(np.asarray(theta, dtype=float))


def _maximize_theta_engine(
    engine: RobustObjective,
    beta: float,
    start: np.ndarray,
    c0: float,
    config: OptimizerConfig,
) -> tuple[np.ndarray, float, bool]:
    """L-BFGS-B ascent at fixed beta; never returns a worse point than start."""
    start = np.clip(np.asarray(start, dtype=float), -c0, c0)

    if config.use_analytic_gradients:

        def fun(th):
            val, grad = engine.objective_and_gradient(th, beta)
            return -val, -grad

    else:

        def fun(th):
            return -engine.objective(th, beta), -engine.fd_gradient(th, beta)

    res = minimize(
        fun,
        start,
        method="L-BFGS-B",
        jac=True,
        bounds=[(-c0, c0)] * start.shape[0],
        options={"maxiter": config.lbfgs_maxiter},
    )
    theta_new = np.clip(res.x, -c0, c0)
    obj_new = engine.objective(theta_new, beta)
    obj_start = engine.objective(start, beta)
    if not np.isfinite(obj_new) or obj_new < obj_start - 1e-9:
        return start, obj_start, not res.success
    return theta_new, obj_new, not res.success


def maximize_theta(
    dataset: Dataset,
    beta: float,
    start,
    spec: KernelSpec,
    tuning: TuningParams,
    c: float,
    c0: float = 10.0,
    config: OptimizerConfig | None = None,
) -> np.ndarray:
    """Bounded quasi-Newton ascent of theta -> objective(beta, pi_theta)."""
    config = config or OptimizerConfig()
    engine = RobustObjective(dataset, spec, tuning, c)
    theta, _, _ = _maximize_theta_engine(engine, beta, np.asarray(start, dtype=float), c0, config)
    return theta


def _run_restart(engine, config, c0, theta0, restart_index):
    theta = np.asarray(theta0, dtype=float)
    trace = []
    beta = float(engine.beta_candidates[0])
    objective = -np.inf
    warned = False
    for it in range(config.max_outer_iters):
        beta, _ = engine.beta_scan(theta)
        theta_new, objective, warn = _maximize_theta_engine(engine, beta, theta, c0, config)
        warned = warned or warn
        step = float(np.linalg.norm(theta_new - theta))
        trace.append(
            {
                "restart": restart_index,
                "iteration": it,
                "beta": float(beta),
                "theta_norm": float(np.linalg.norm(theta_new)),
                "objective": float(objective),
            }
        )
        done = step <= min(float(np.linalg.norm(theta)), 1.0) * config.eps_tol
        theta = theta_new
        if done:
            break
    return {
        "restart": restart_index,
        "theta": theta,
        "beta": beta,
        "objective": float(objective),
        "trace": trace,
        "line_search_warning": warned,
    }


def block_coordinate_ascent(
    dataset: Dataset,
    config: OptimizerConfig,
    tuning: TuningParams,
    c: float,
    *,
    spec: KernelSpec | None = None,
    beta_box: tuple[float, float] | None = None,
    c0: float = 10.0,
) -> TrainResult:
    """Alternate exact beta scans and bounded theta ascents from random
    restarts; returns the best restart (ties to the smallest index)."""
    spec = spec if spec is not None else default_kernel_spec(dataset)
    engine = RobustObjective(dataset, spec, tuning, c, beta_box=beta_box)
    rng = derived_rng(config.seed, "optimizer:restart-inits")
    scale = min(1.0, config.theta_init_scale) if config.theta_init_scale > 0 else 0.0
    inits = rng.uniform(-c0 * scale, c0 * scale, size=(config.n_restarts, dataset.p))

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(
                pool.map(lambda r: _run_restart(engine, config, c0, inits[r], r), range(config.n_restarts))
            )
    else:
        results = [_run_restart(engine, config, c0, inits[r], r) for r in range(config.n_restarts)]

    finite = [r for r in results if np.isfinite(r["objective"])]
    if not finite:
        raise FitError("all restarts failed to produce a finite objective")
    best = max(finite, key=lambda r: (r["objective"], -r["restart"]))
    trace = [rec for r in results for rec in r["trace"]]
    return TrainResult(
        theta_hat=best["theta"],
        beta_hat=float(best["beta"]),
        objective=float(best["objective"]),
        trace=trace,
        restart_index=int(best["restart"]),
    )
