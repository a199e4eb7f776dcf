"""Exact finite-state computations backing every statistical test.

Everything here is plain linear algebra on an explicit transition tensor:
stationary distributions, the exact robust objective and its CVaR dual, the
primal worst case over the total-variation ball, exact relative values and
density ratios, and the ergodicity-based rule for choosing the robustness
level.  The continuous-state estimators are validated against these
quantities on finite chains, where states are stored as their indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ._validation import ValidationError, check_finite, check_probability_rows, readonly
from .data import Dataset
from .nuisance import modified_rewards


@dataclass(frozen=True)
class FiniteMDP:
    """Transition tensor P[s, a, s'] and state-reward vector R[s]."""

    P: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        R = np.asarray(self.R, dtype=float).reshape(-1)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"P must have shape (S, A, S), got {P.shape}")
        if R.shape[0] != P.shape[0]:
            raise ValidationError("R length must match the state count")
        if np.any(P < 0):
            raise ValidationError("P has negative entries")
        if np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValidationError("P rows must sum to 1 within 1e-12")
        check_finite("R", R)
        object.__setattr__(self, "P", readonly(P))
        object.__setattr__(self, "R", readonly(R))

    @property
    def n_states(self):
        return self.P.shape[0]

    @property
    def n_actions(self):
        return self.P.shape[1]

    def to_json(self) -> str:
        return json.dumps({"P": self.P.tolist(), "R": self.R.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FiniteMDP":
        obj = json.loads(text)
        return cls(P=np.asarray(obj["P"], dtype=float), R=np.asarray(obj["R"], dtype=float))


@dataclass(frozen=True)
class TabularPolicy:
    """Row-stochastic action probabilities, one row per state."""

    probs: np.ndarray

    def __post_init__(self):
        probs = check_probability_rows("policy", np.asarray(self.probs, dtype=float))
        if probs.ndim != 2:
            raise ValidationError("probs must be a (n_states, n_actions) matrix")
        object.__setattr__(self, "probs", readonly(probs))

    @property
    def n_actions(self):
        return self.probs.shape[1]

    def action_probs(self, states) -> np.ndarray:
        """Kernel-module interop: states hold the state index in column 0."""
        idx = np.rint(np.asarray(states, dtype=float).reshape(len(states), -1)[:, 0]).astype(int)
        return self.probs[idx]


def transition_matrix(m: FiniteMDP, pi: TabularPolicy) -> np.ndarray:
    """State transition matrix of the induced chain, P^pi[s, s']."""
    return np.einsum("sa,sat->st", pi.probs, m.P)


def stationary_distribution(m: FiniteMDP, pi: TabularPolicy) -> np.ndarray:
    """Unique stationary distribution of the induced chain.

    Uniqueness is checked through the multiplicity of the unit eigenvalue;
    the distribution itself comes from a linear solve so the invariance
    residual is at machine precision.
    """
    P = transition_matrix(m, pi)
    S = P.shape[0]
    eigvals = np.linalg.eigvals(P.T)
    n_unit = int(np.sum(np.abs(eigvals - 1.0) < 1e-8))
    if n_unit != 1:
        raise ValidationError("non-unique stationary distribution (unit eigenvalue multiplicity != 1)")
    A = np.vstack([(P.T - np.eye(S))[:-1], np.ones(S)])
    b = np.zeros(S)
    b[-1] = 1.0
    d = np.linalg.solve(A, b)
    if d.min() < -1e-10:
        raise ValidationError("stationary solve produced negative mass")
    d = np.maximum(d, 0.0)
    return d / d.sum()


def state_action_stationary(m: FiniteMDP, pi: TabularPolicy) -> np.ndarray:
    """d^pi(s) pi(a|s) as an (S, A) matrix."""
    return stationary_distribution(m, pi)[:, None] * pi.probs


def exact_M(m: FiniteMDP, pi: TabularPolicy, beta: float, c: float) -> float:
    """beta - E_{d^pi}[(beta - R)_+] / (1 - c)."""
    d = stationary_distribution(m, pi)
    return float(beta - np.sum(d * np.maximum(beta - m.R, 0.0)) / (1.0 - c))


def dual_worst_case(m: FiniteMDP, pi: TabularPolicy, c: float) -> tuple[float, float]:
    """CVaR-dual worst-case value and the leftmost maximizing beta.

    The inner objective is piecewise linear and concave in beta with knots
    at the supported rewards, so a breakpoint scan is exact.
    """
    if not 0.0 <= c < 1.0:
        raise ValidationError(f"robustness level c must be in [0, 1), got {c}")
    d = stationary_distribution(m, pi)
    support = d > 0
    rewards = np.unique(m.R[support])
    r_min = float(rewards[0])
    best_val = -np.inf
    best_beta = r_min
    for beta in rewards:
        val = beta - np.sum(d * np.maximum(beta - m.R, 0.0)) / (1.0 - c)
        if val > best_val + 1e-15:
            best_val = val
            best_beta = float(beta)
    return c * r_min + (1.0 - c) * best_val, best_beta


def primal_worst_case(m: FiniteMDP, pi: TabularPolicy, c: float) -> float:
    """Exact minimum of E_u[R] over the TV ball by greedy mass shifting.

    Up to c total mass is removed from the highest-reward supported states
    (capped at their stationary mass) and deposited on the lowest-reward
    supported state; absolute continuity keeps u supported on d^pi.
    """
    if not 0.0 <= c < 1.0:
        raise ValidationError(f"robustness level c must be in [0, 1), got {c}")
    d = stationary_distribution(m, pi)
    u = d.copy()
    support = np.flatnonzero(d > 0)
    order = support[np.argsort(-m.R[support], kind="stable")]
    dest = support[np.argmin(m.R[support])]
    budget = c
    for s in order:
        if budget <= 0 or m.R[s] <= m.R[dest]:
            break
        take = min(budget, u[s])
        u[s] -= take
        u[dest] += take
        budget -= take
    return float(u @ m.R)


def primal_worst_case_lp(m: FiniteMDP, pi: TabularPolicy, c: float) -> float:
    """Linear-program cross-check of primal_worst_case."""
    d = stationary_distribution(m, pi)
    S = d.shape[0]
    # Variables [u, v] with v >= |u - d| and sum v <= 2c.
    cost = np.concatenate([m.R, np.zeros(S)])
    eye = np.eye(S)
    A_ub = np.block(
        [
            [eye, -eye],
            [-eye, -eye],
            [np.zeros((1, S)), np.ones((1, S))],
        ]
    )
    b_ub = np.concatenate([d, -d, [2.0 * c]])
    A_eq = np.concatenate([np.ones(S), np.zeros(S)])[None, :]
    bounds = [(0.0, None) if d[s] > 0 else (0.0, 0.0) for s in range(S)]
    bounds += [(0.0, None)] * S
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"primal LP failed: {res.message}")
    return float(res.fun)


def exact_relative_value(
    m: FiniteMDP,
    pi: TabularPolicy,
    beta: float,
    c: float,
    ref: tuple[int, int] = (0, 0),
) -> tuple[float, np.ndarray]:
    """Solve the average-reward Bellman system for the modified reward.

    Returns (eta, Q) with Q[s*, a*] = 0; eta coincides with exact_M and the
    Bellman residual is at solver precision for ergodic chains.
    """
    S, A = m.n_states, m.n_actions
    r_beta = modified_rewards(m.R, beta, c)
    # Unknowns x = [Q(0,0), ..., Q(S-1, A-1), eta] in (s, a) row-major order.
    n = S * A
    # P_tilde[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')
    P_tilde = np.einsum("sat,tb->satb", m.P, pi.probs).reshape(n, n)
    sys = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    sys[:n, :n] = np.eye(n) - P_tilde
    sys[:n, n] = 1.0
    rhs[:n] = np.repeat(r_beta, A)
    s_ref, a_ref = ref
    sys[n, s_ref * A + a_ref] = 1.0
    try:
        x = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("singular Bellman system (chain not ergodic?)") from exc
    Q = x[:n].reshape(S, A)
    Q = Q - Q[s_ref, a_ref]  # make the normalization exact, not solver-precision
    eta = float(x[n])
    return eta, Q


def relative_value_difference(m: FiniteMDP, pi: TabularPolicy, Q: np.ndarray) -> np.ndarray:
    """U[s, a, s'] = sum_a' pi(a'|s') Q(s', a') - Q(s, a)."""
    qbar = np.sum(pi.probs * Q, axis=1)
    return qbar[None, None, :] - Q[:, :, None]


def exact_ratio(m: FiniteMDP, target: TabularPolicy, behavior: TabularPolicy) -> np.ndarray:
    """omega[s, a] = d^target(s) target(a|s) / (d^behavior(s) behavior(a|s))."""
    num = state_action_stationary(m, target)
    den = state_action_stationary(m, behavior)
    if np.any(den <= 0):
        raise ValidationError("behavior stationary density vanishes at some (s, a)")
    return num / den


def avg_visitation_tv(m: FiniteMDP, pi: TabularPolicy, init, T: int) -> float:
    """TV distance between the T-step average visitation law and d^pi."""
    if T < 1:
        raise ValidationError("T must be >= 1")
    P = transition_matrix(m, pi)
    d_stat = stationary_distribution(m, pi)
    d_t = np.asarray(init, dtype=float)
    if d_t.shape != d_stat.shape or abs(d_t.sum() - 1.0) > 1e-10 or np.any(d_t < 0):
        raise ValidationError("init must be a distribution over states")
    acc = np.zeros_like(d_t)
    for _ in range(T):
        acc += d_t
        d_t = P.T @ d_t
    avg = acc / T
    return 0.5 * float(np.sum(np.abs(avg - d_stat)))


def choose_c(C0: float, alpha: float, T0: int) -> float:
    """Robustness level min(1, C0 alpha / ((1 - alpha) T0)) from uniform
    geometric ergodicity constants."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if C0 <= 0 or T0 < 1:
        raise ValidationError("need C0 > 0 and T0 >= 1")
    return min(1.0, C0 * alpha / ((1.0 - alpha) * T0))


def fit_ergodicity_constants(m: FiniteMDP, pi: TabularPolicy, t_max: int = 500) -> tuple[float, float]:
    """Empirical (C0, alpha) with max_s TV(law of S_t | S_1=s, d^pi) <= C0 alpha^t.

    alpha is the second-largest eigenvalue modulus padded away from it, and
    C0 the smallest constant covering all probed horizons, so the bound
    holds by construction on 1 <= t <= t_max.
    """
    P = transition_matrix(m, pi)
    d_stat = stationary_distribution(m, pi)
    eigvals = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    slem = eigvals[1] if eigvals.shape[0] > 1 else 0.0
    alpha = float(min(0.999, max(slem + 0.02, 0.05)))
    dists = np.eye(P.shape[0])  # row s: law of S_t given S_1 = s, starting at t=1
    C0 = 0.0
    for t in range(1, t_max + 1):
        tv = 0.5 * np.max(np.sum(np.abs(dists - d_stat[None, :]), axis=1))
        C0 = max(C0, tv / alpha**t)
        dists = dists @ P
    return C0, alpha


def simulate_finite_mdp(
    m: FiniteMDP,
    behavior: TabularPolicy,
    n: int,
    t0: int,
    rng: np.random.Generator,
    init=None,
) -> Dataset:
    """Roll out n stationary-start episodes of length t0 under ``behavior``.

    States are stored as their indices (p = 1) so the batch estimators can
    consume the data directly.  ``init`` overrides the default stationary
    initial distribution.
    """
    if init is None:
        init = stationary_distribution(m, behavior)
    init = np.asarray(init, dtype=float)
    cum_init = np.cumsum(init)
    cum_pi = np.cumsum(behavior.probs, axis=1)
    cum_P = np.cumsum(m.P, axis=2)

    states = np.empty((n, t0 + 1, 1))
    actions = np.empty((n, t0), dtype=int)
    rewards = np.empty((n, t0))
    s = np.searchsorted(cum_init, rng.random(n), side="right")
    np.clip(s, 0, m.n_states - 1, out=s)
    for t in range(t0):
        states[:, t, 0] = s
        rewards[:, t] = m.R[s]
        a = (cum_pi[s] > rng.random(n)[:, None]).argmax(axis=1)
        actions[:, t] = a
        s = (cum_P[s, a] > rng.random(n)[:, None]).argmax(axis=1)
    states[:, t0, 0] = s
    return Dataset(states=states, actions=actions, rewards=rewards, n_actions=m.n_actions)


def random_ergodic_mdp(rng: np.random.Generator, n_states: int, n_actions: int) -> FiniteMDP:
    """Random test instance with strictly positive transition kernel, so the
    induced chain is ergodic with full support under any policy."""
    raw = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    P = 0.9 * raw + 0.1 / n_states
    R = rng.uniform(-1.0, 2.0, size=n_states)
    return FiniteMDP(P=P, R=R)


def random_tabular_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> TabularPolicy:
    probs = rng.dirichlet(np.ones(n_actions), size=n_states)
    probs = 0.9 * probs + 0.1 / n_actions
    return TabularPolicy(probs=probs)
