"""Gaussian state-action kernels, reference shift, and Gram assembly.

The state kernel is k0(s1, s2) = exp(-||s1 - s2||^2 / (2 sigma^2)); the
state-action kernel composes it with an action indicator,
k((s1,a1),(s2,a2)) = 1{a1=a2} k0(s1,s2).  Value-type function fits use the
reference-shifted kernel

    kt(w1, w2) = k(w1,w2) - k(w*,w2) - k(w1,w*) + k(w*,w*),

whose RKHS consists of functions vanishing at the reference pair w* =
(s*, a*).  The policy-shifted matrix Ktilde(pi) is the Gram matrix of the
functions kt(W_h, .) - sum_a pi(a|S'_h) kt((S'_h, a), .), one per observed
transition, and every entry reduces to a handful of dense Gaussian blocks
between current states, next states and the reference state.  Those blocks
do not depend on the policy, so repeated Ktilde/derivative assembly during
policy search is cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from ._validation import ValidationError, as_state_matrix, check_action_index, readonly
from .data import Dataset, flatten_arrays


@dataclass(frozen=True)
class KernelSpec:
    """Bandwidth plus the reference state-action pair of the shift."""

    bandwidth: float
    ref_state: np.ndarray
    ref_action: int

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValidationError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "ref_state", readonly(np.asarray(self.ref_state, dtype=float).reshape(-1)))
        object.__setattr__(self, "ref_action", int(self.ref_action))


@dataclass(frozen=True)
class GramCache:
    """Kernel-matrix substrate shared by both nuisance fits."""

    L: np.ndarray
    Ktilde: np.ndarray
    M: np.ndarray


def median_heuristic_bandwidth(states) -> float:
    """Median of pairwise Euclidean distances over distinct unordered pairs."""
    X = as_state_matrix(states)
    if X.shape[0] < 2:
        raise ValidationError("median heuristic needs at least 2 points")
    dists = pdist(X)
    if not np.any(dists > 0):
        raise ValidationError("degenerate bandwidth: all points identical")
    sigma = float(np.median(dists))
    if sigma <= 0:
        raise ValidationError("degenerate bandwidth: median pairwise distance is 0")
    return sigma


def default_kernel_spec(d: Dataset) -> KernelSpec:
    """Median-heuristic bandwidth on the observed current states; reference
    pair fixed to the first transition's (state, action)."""
    S, A, _, _ = flatten_arrays(d)
    return KernelSpec(bandwidth=median_heuristic_bandwidth(S), ref_state=S[0], ref_action=int(A[0]))


def gaussian_gram(X, Y, bandwidth: float) -> np.ndarray:
    """Dense k0 matrix between the rows of X and Y."""
    X = as_state_matrix(X)
    Y = as_state_matrix(Y)
    sq = np.sum(X * X, axis=1)[:, None] + np.sum(Y * Y, axis=1)[None, :] - 2.0 * (X @ Y.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * bandwidth**2))


def state_action_kernel(w1, w2, spec: KernelSpec) -> float:
    """k((s1,a1),(s2,a2)) = 1{a1=a2} k0(s1,s2)."""
    s1, a1 = w1
    s2, a2 = w2
    if int(a1) != int(a2):
        return 0.0
    s1 = np.asarray(s1, dtype=float).reshape(-1)
    s2 = np.asarray(s2, dtype=float).reshape(-1)
    return float(np.exp(-np.sum((s1 - s2) ** 2) / (2.0 * spec.bandwidth**2)))


def shifted_kernel(w1, w2, spec: KernelSpec) -> float:
    """Reference-shifted state-action kernel; vanishes when either argument
    is the reference pair."""
    ref = (spec.ref_state, spec.ref_action)
    return (
        state_action_kernel(w1, w2, spec)
        - state_action_kernel(ref, w2, spec)
        - state_action_kernel(w1, ref, spec)
        + state_action_kernel(ref, ref, spec)
    )


def assemble_gram(d: Dataset, spec: KernelSpec) -> np.ndarray:
    """N x N Gram matrix of the (unshifted) state-action kernel on the
    observed pairs (S_h, A_h), used as the projection space of both fits."""
    S, A, _, _ = flatten_arrays(d)
    G = gaussian_gram(S, S, spec.bandwidth)
    same = A[:, None] == A[None, :]
    L = np.where(same, G, 0.0)
    return 0.5 * (L + L.T)


class PolicyKernelBuilder:
    """Policy-independent kernel blocks of one dataset.

    ktilde(probs) and ktilde_grad(...) assemble the policy-shifted Gram
    matrix and its theta-derivative from the action-probability matrix at
    next states (and its gradients), without touching the kernel again.
    """

    def __init__(self, d: Dataset, spec: KernelSpec, n_actions: int | None = None):
        self.spec = spec
        self.n_actions = d.n_actions if n_actions is None else n_actions
        check_action_index(spec.ref_action, self.n_actions)
        S, A, _, S_next = flatten_arrays(d)
        bw = spec.bandwidth
        self.A = A
        self.n = S.shape[0]
        self.G_ss = gaussian_gram(S, S, bw)
        self.G_ns = gaussian_gram(S_next, S, bw)
        self.G_nn = gaussian_gram(S_next, S_next, bw)
        ref = spec.ref_state[None, :]
        self.g_s = gaussian_gram(S, ref, bw)[:, 0]
        self.g_n = gaussian_gram(S_next, ref, bw)[:, 0]
        self.ref_hit = (A == spec.ref_action).astype(float)
        same = A[:, None] == A[None, :]
        # Shifted kernel on the observed pairs: the Gram of kt(W_h, .).
        self.K_base = (
            np.where(same, self.G_ss, 0.0)
            - self.ref_hit[None, :] * self.g_s[None, :]
            - self.ref_hit[:, None] * self.g_s[:, None]
            + 1.0
        )
        self.L = np.where(same, self.G_ss, 0.0)
        self.S_next = S_next

    def _check_probs(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (self.n, self.n_actions):
            raise ValidationError(f"probs must have shape ({self.n}, {self.n_actions}), got {probs.shape}")
        if np.any(probs < -1e-12) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-8):
            raise ValidationError("policy returned a non-probability vector on next states")
        return probs

    def ktilde(self, probs) -> np.ndarray:
        """Policy-shifted Gram matrix for action probabilities ``probs`` at
        the next states (shape (N, n_actions))."""
        probs = self._check_probs(probs)
        aref = self.spec.ref_action
        # t2[h, j] = sum_a probs[h, a] * kt((S'_h, a), W_j)
        t2 = (
            probs[:, self.A] * self.G_ns
            - self.ref_hit[None, :] * self.g_s[None, :]
            - (probs[:, aref] * self.g_n)[:, None]
            + 1.0
        )
        pref = probs[:, aref] * self.g_n
        t4 = (probs @ probs.T) * self.G_nn - pref[None, :] - pref[:, None] + 1.0
        K = self.K_base - t2 - t2.T + t4
        return 0.5 * (K + K.T)

    def ktilde_grad(self, probs, prob_grads) -> np.ndarray:
        """(N, N, p) tensor dKtilde/dtheta given dpi(a|S'_h)/dtheta."""
        probs = self._check_probs(probs)
        grads = np.asarray(prob_grads, dtype=float)
        if grads.shape[:2] != (self.n, self.n_actions):
            raise ValidationError(f"prob_grads must have shape ({self.n}, {self.n_actions}, p)")
        aref = self.spec.ref_action
        ga = grads[:, self.A, :]  # (N, N, p): d pi(A_j | S'_h)
        dt2 = ga * self.G_ns[:, :, None] - (grads[:, aref, :] * self.g_n[:, None])[:, None, :]
        du = np.einsum("hak,ja->hjk", grads, probs) + np.einsum("ha,jak->hjk", probs, grads)
        dpref = grads[:, aref, :] * self.g_n[:, None]  # (N, p)
        dt4 = du * self.G_nn[:, :, None] - dpref[None, :, :] - dpref[:, None, :]
        return -dt2 - np.transpose(dt2, (1, 0, 2)) + dt4


def assemble_policy_kernel(d: Dataset, policy, spec: KernelSpec) -> np.ndarray:
    """Ktilde(pi) for a policy exposing action_probs(states) -> (N, n_actions)."""
    builder = PolicyKernelBuilder(d, spec)
    _, _, _, S_next = flatten_arrays(d)
    return builder.ktilde(policy.action_probs(S_next))


def cross_policy_kernel(dx: Dataset, dy: Dataset, policy, spec: KernelSpec) -> np.ndarray:
    """Cross Gram block <kt-shifted features of dx, of dy> under one policy.

    Row h corresponds to transition h of ``dx``, column j to transition j of
    ``dy``; both datasets must share state dimension and action count.  Used
    by cross-validation to evaluate functions fitted on one fold at the
    transitions of another.
    """
    Sx, Ax, _, Snx = flatten_arrays(dx)
    Sy, Ay, _, Sny = flatten_arrays(dy)
    bw = spec.bandwidth
    px = policy.action_probs(Snx)
    py = policy.action_probs(Sny)
    aref = spec.ref_action
    ref = spec.ref_state[None, :]

    G_ss = gaussian_gram(Sx, Sy, bw)
    G_nxs = gaussian_gram(Snx, Sy, bw)
    G_nys = gaussian_gram(Sny, Sx, bw)
    G_nn = gaussian_gram(Snx, Sny, bw)
    g_sx = gaussian_gram(Sx, ref, bw)[:, 0]
    g_sy = gaussian_gram(Sy, ref, bw)[:, 0]
    g_nx = gaussian_gram(Snx, ref, bw)[:, 0]
    g_ny = gaussian_gram(Sny, ref, bw)[:, 0]
    hit_x = (Ax == aref).astype(float)
    hit_y = (Ay == aref).astype(float)

    base = (
        np.where(Ax[:, None] == Ay[None, :], G_ss, 0.0)
        - hit_y[None, :] * g_sy[None, :]
        - hit_x[:, None] * g_sx[:, None]
        + 1.0
    )
    t2 = px[:, Ay] * G_nxs - hit_y[None, :] * g_sy[None, :] - (px[:, aref] * g_nx)[:, None] + 1.0
    t3 = (py[:, Ax] * G_nys).T - hit_x[:, None] * g_sx[:, None] - (py[:, aref] * g_ny)[None, :] + 1.0
    t4 = (
        (px @ py.T) * G_nn
        - (py[:, aref] * g_ny)[None, :]
        - (px[:, aref] * g_nx)[:, None]
        + 1.0
    )
    return base - t2 - t3 + t4
