"""Scikit-learn style estimator wrapping the full training pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._seeding import derive_seed
from ._validation import ValidationError, as_state_matrix
from .data import Dataset
from .kernels import KernelSpec, default_kernel_spec
from .nuisance import TuningParams, default_tuning
from .optimizer import OptimizerConfig, RobustObjective, block_coordinate_ascent
from .policy import LogisticPolicy
from .tuning import TuningGrid, cross_validate_tuning, default_tuning_grid


class RobustPolicyLearner(BaseEstimator):
    """Learn a box-constrained logistic policy maximizing the robust objective.

    Parameters follow the scikit-learn convention (stored verbatim, fitted
    state in trailing-underscore attributes).  ``fit`` consumes a
    :class:`drpolicy.data.Dataset` of trajectories rather than a flat design
    matrix; ``predict``/``predict_proba`` operate on state arrays.

    Parameters
    ----------
    c : robustness level in [0, 1); c=0 recovers plain long-run average
        reward maximization.
    c0 : box bound on the policy parameters.
    beta_box : optional (lo, hi) interval for the dual variable; defaults to
        the observed reward range.
    bandwidth : "median" or a positive float.
    tuning : "cv", "default", or a TuningParams instance.
    cv_folds : folds for the min-max cross-validation when tuning="cv".
    random_state : root seed; all internal streams derive from it.
    """

    def __init__(
        self,
        c=0.1,
        c0=10.0,
        beta_box=None,
        bandwidth="median",
        tuning="cv",
        cv_folds=3,
        eps_tol=1e-4,
        max_outer_iters=50,
        n_restarts=10,
        theta_init_scale=1.0,
        use_analytic_gradients=True,
        lbfgs_maxiter=60,
        threads=1,
        random_state=0,
    ):
        self.c = c
        self.c0 = c0
        self.beta_box = beta_box
        self.bandwidth = bandwidth
        self.tuning = tuning
        self.cv_folds = cv_folds
        self.eps_tol = eps_tol
        self.max_outer_iters = max_outer_iters
        self.n_restarts = n_restarts
        self.theta_init_scale = theta_init_scale
        self.use_analytic_gradients = use_analytic_gradients
        self.lbfgs_maxiter = lbfgs_maxiter
        self.threads = threads
        self.random_state = random_state

    def _resolve_spec(self, d: Dataset) -> KernelSpec:
        if self.bandwidth == "median":
            return default_kernel_spec(d)
        return KernelSpec(
            bandwidth=float(self.bandwidth),
            ref_state=d.states[0, 0],
            ref_action=int(d.actions[0, 0]),
        )

    def _resolve_tuning(self, d: Dataset, spec: KernelSpec) -> TuningParams:
        if isinstance(self.tuning, TuningParams):
            return self.tuning
        if self.tuning == "default":
            return default_tuning(d.n_transitions)
        if self.tuning == "cv":
            grid = default_tuning_grid(
                d, c0=self.c0, seed=derive_seed(self.random_state, "learner:tuning-grid"),
                k_folds=self.cv_folds,
            )
            return cross_validate_tuning(
                d, grid, spec, seed=derive_seed(self.random_state, "learner:tuning-cv"), c=self.c
            ).params
        if isinstance(self.tuning, TuningGrid):
            return cross_validate_tuning(
                d, self.tuning, spec, seed=derive_seed(self.random_state, "learner:tuning-cv"), c=self.c
            ).params
        raise ValidationError(f"tuning must be 'cv', 'default', a TuningParams or a TuningGrid, got {self.tuning!r}")

    def fit(self, X: Dataset, y=None):
        """Select tuning rates, run block coordinate ascent, store the policy."""
        if not isinstance(X, Dataset):
            raise ValidationError("fit expects a drpolicy Dataset")
        spec = self._resolve_spec(X)
        tuning = self._resolve_tuning(X, spec)
        config = OptimizerConfig(
            eps_tol=self.eps_tol,
            max_outer_iters=self.max_outer_iters,
            n_restarts=self.n_restarts,
            theta_init_scale=self.theta_init_scale,
            use_analytic_gradients=self.use_analytic_gradients,
            seed=derive_seed(self.random_state, "learner:optimizer"),
            lbfgs_maxiter=self.lbfgs_maxiter,
            threads=self.threads,
        )
        result = block_coordinate_ascent(
            X, config, tuning, self.c, spec=spec, beta_box=self.beta_box, c0=self.c0
        )
        self.kernel_spec_ = spec
        self.tuning_ = tuning
        self.train_result_ = result
        self.theta_ = result.theta_hat
        self.beta_ = result.beta_hat
        self.objective_ = result.objective
        self.policy_ = LogisticPolicy(theta=result.theta_hat, c0=self.c0)
        self.n_features_in_ = X.p
        return self

    def _check_fitted(self):
        if not hasattr(self, "policy_"):
            raise NotFittedError("RobustPolicyLearner is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        """Action probabilities of the fitted policy at states X (n, p)."""
        self._check_fitted()
        return self.policy_.action_probs(as_state_matrix(X, self.n_features_in_))

    def predict(self, X) -> np.ndarray:
        """Most probable action per state."""
        return self.predict_proba(X).argmax(axis=1)

    def score(self, X: Dataset, y=None) -> float:
        """Robust objective estimate of the fitted (theta, beta) on ``X``,
        with the nuisances refitted on that data."""
        self._check_fitted()
        if not isinstance(X, Dataset):
            raise ValidationError("score expects a drpolicy Dataset")
        engine = RobustObjective(X, self.kernel_spec_, self.tuning_, self.c, beta_box=self.beta_box)
        return engine.objective(self.theta_, self.beta_)
