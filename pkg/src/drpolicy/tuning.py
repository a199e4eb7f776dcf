"""Min-max K-fold cross-validation of the nuisance penalty rates.

Folds partition episodes (not transitions) to respect within-trajectory
dependence.  For each candidate pair the nuisances are fitted on the
training folds and scored on the held-out fold by the mean squared fitted
projected Bellman error: the held-out TD errors are regressed on (s, a) by
Gaussian kernel ridge and the squared fitted values averaged.  Value and
ratio candidates are selected independently, each minimizing the maximum
validation error over probe policies (and probe betas for the value route),
summed over folds.  Selection is policy- and beta-independent by design;
the probe TD errors use c = 0 unless a robustness level is supplied, and
the chosen rates are reused across c.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from ._seeding import derived_rng
from ._validation import ValidationError
from .data import Dataset, flatten_arrays
from .kernels import KernelSpec, assemble_gram, assemble_policy_kernel, cross_policy_kernel
from .nuisance import (
    TuningParams,
    _chol_with_jitter,
    build_projection,
    fit_ratio,
    fit_value_difference,
    modified_rewards,
)
from .policy import LogisticPolicy

VALIDATION_RIDGE_RATE = 1e-3  # mu for the held-out Bellman-error regression, per validation transition


@dataclass(frozen=True)
class TuningGrid:
    """Candidate (mu, lambda) rate pairs plus the probe set."""

    candidates_value: list
    candidates_ratio: list
    probe_policies: list
    probe_betas: list
    k_folds: int = 3

    def __post_init__(self):
        if not (self.candidates_value and self.candidates_ratio and self.probe_policies and self.probe_betas):
            raise ValidationError("tuning grid lists must be nonempty")
        if self.k_folds < 2:
            raise ValidationError("k_folds must be >= 2")


@dataclass(frozen=True)
class TuningSelection:
    """Chosen rates plus the full fold-summed validation error tensors."""

    params: TuningParams
    errors_value: np.ndarray = field(repr=False)  # (J_value, M, L)
    errors_ratio: np.ndarray = field(repr=False)  # (J_ratio, M)
    index_value: int = 0
    index_ratio: int = 0

    def to_dict(self) -> dict:
        return {
            "params": {
                "lambda1": self.params.lambda1,
                "mu1": self.params.mu1,
                "lambda2": self.params.lambda2,
                "mu2": self.params.mu2,
            },
            "index_value": int(self.index_value),
            "index_ratio": int(self.index_ratio),
            "errors_value": self.errors_value.tolist(),
            "errors_ratio": self.errors_ratio.tolist(),
        }


def default_tuning_grid(
    d: Dataset,
    c0: float = 10.0,
    seed: int = 0,
    n_probe_policies: int = 5,
    rates=(3e-2, 3e-3, 3e-4),
    k_folds: int = 3,
) -> TuningGrid:
    """Diagonal (mu, lambda) rate pairs, uniform probe policies in the theta
    box, and probe betas at the {0.25, 0.5, 0.75} reward quantiles."""
    rng = derived_rng(seed, "tuning:probe-policies")
    thetas = rng.uniform(-c0, c0, size=(n_probe_policies, d.p))
    policies = [LogisticPolicy(theta=t, c0=c0) for t in thetas]
    betas = [float(q) for q in np.quantile(d.rewards, [0.25, 0.5, 0.75])]
    pairs = [(float(mu), float(lam)) for mu in rates for lam in rates if mu == lam]
    pairs += [(float(rates[0]), float(rates[-1])), (float(rates[-1]), float(rates[0]))]
    return TuningGrid(
        candidates_value=pairs,
        candidates_ratio=pairs,
        probe_policies=policies,
        probe_betas=betas,
        k_folds=k_folds,
    )


def _episode_subset(d: Dataset, idx) -> Dataset:
    return Dataset(
        states=d.states[idx], actions=d.actions[idx], rewards=d.rewards[idx], n_actions=d.n_actions
    )


def _episode_folds(d: Dataset, k_folds: int, seed: int) -> list[np.ndarray]:
    if d.n < k_folds:
        raise ValidationError(f"fewer episodes ({d.n}) than folds ({k_folds})")
    perm = derived_rng(seed, "tuning:fold-split").permutation(d.n)
    return [np.sort(part) for part in np.array_split(perm, k_folds)]


def cross_validate_tuning(
    d: Dataset, grid: TuningGrid, spec: KernelSpec, seed: int = 0, c: float = 0.0
) -> TuningSelection:
    """Run the full candidate x fold x probe sweep and apply the min-max rule."""
    folds = _episode_folds(d, grid.k_folds, seed)
    n_pol = len(grid.probe_policies)
    n_beta = len(grid.probe_betas)
    e_value = np.zeros((len(grid.candidates_value), n_pol, n_beta))
    e_ratio = np.zeros((len(grid.candidates_ratio), n_pol))

    for fold in folds:
        val_mask = np.zeros(d.n, dtype=bool)
        val_mask[fold] = True
        d_val = _episode_subset(d, np.flatnonzero(val_mask))
        d_tr = _episode_subset(d, np.flatnonzero(~val_mask))
        n_tr = d_tr.n_transitions
        n_val = d_val.n_transitions
        L_tr = assemble_gram(d_tr, spec)
        L_val = assemble_gram(d_val, spec)
        val_factor = _chol_with_jitter(
            L_val + VALIDATION_RIDGE_RATE * n_val * np.eye(n_val), "tuning validation ridge"
        )
        _, _, r_tr, _ = flatten_arrays(d_tr)
        _, _, r_val, _ = flatten_arrays(d_val)

        mus = {mu for mu, _ in grid.candidates_value} | {mu for mu, _ in grid.candidates_ratio}
        projections = {mu: build_projection(L_tr, mu * n_tr) for mu in mus}

        for m, policy in enumerate(grid.probe_policies):
            K_tr = assemble_policy_kernel(d_tr, policy, spec)
            K_cross = cross_policy_kernel(d_val, d_tr, policy, spec)

            for j, (mu1, lam1) in enumerate(grid.candidates_value):
                for l, beta in enumerate(grid.probe_betas):
                    fit = fit_value_difference(
                        L_tr,
                        K_tr,
                        modified_rewards(r_tr, beta, c),
                        lam1 * n_tr,
                        mu1 * n_tr,
                        projection=projections[mu1],
                    )
                    delta = modified_rewards(r_val, beta, c) - fit.eta_hat - K_cross @ fit.alpha_hat
                    fitted = L_val @ cho_solve(val_factor, delta)
                    e_value[j, m, l] += float(np.mean(fitted**2))

            for j, (mu2, lam2) in enumerate(grid.candidates_ratio):
                rfit = fit_ratio(
                    L_tr, K_tr, lam2 * n_tr, mu2 * n_tr, projection=projections[mu2]
                )
                delta = 1.0 - K_cross @ rfit.phi_hat
                fitted = L_val @ cho_solve(val_factor, delta)
                e_ratio[j, m] += float(np.mean(fitted**2))

    idx_value = int(np.argmin(e_value.max(axis=(1, 2))))
    idx_ratio = int(np.argmin(e_ratio.max(axis=1)))
    mu1, lam1 = grid.candidates_value[idx_value]
    mu2, lam2 = grid.candidates_ratio[idx_ratio]
    params = TuningParams(lambda1=lam1, mu1=mu1, lambda2=lam2, mu2=mu2)
    return TuningSelection(
        params=params,
        errors_value=e_value,
        errors_ratio=e_ratio,
        index_value=idx_value,
        index_ratio=idx_ratio,
    )


def select_tuning(
    d: Dataset, grid: TuningGrid, spec: KernelSpec, seed: int = 0, c: float = 0.0
) -> TuningParams:
    """Algorithm entry point: the min-max winner of the candidate sweep."""
    return cross_validate_tuning(d, grid, spec, seed=seed, c=c).params
