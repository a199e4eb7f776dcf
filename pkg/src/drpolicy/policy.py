"""Box-constrained logistic policies over two actions."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._validation import ValidationError, as_state_matrix, check_action_index, check_finite, readonly


@dataclass(frozen=True)
class LogisticPolicy:
    """Stochastic policy pi(1|s) = sigmoid(s^T theta) with ||theta||_inf <= c0."""

    theta: np.ndarray
    c0: float = 10.0

    n_actions = 2

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        check_finite("theta", theta)
        if self.c0 <= 0:
            raise ValidationError("c0 must be positive")
        if np.max(np.abs(theta)) > self.c0 * (1 + 1e-12):
            raise ValidationError(f"theta violates the box ||theta||_inf <= {self.c0}")
        object.__setattr__(self, "theta", readonly(theta))

    @property
    def p(self):
        return self.theta.shape[0]

    def action_probs(self, states) -> np.ndarray:
        """(N, 2) matrix of action probabilities at each state."""
        X = as_state_matrix(states, self.p)
        p1 = expit(X @ self.theta)
        return np.column_stack([1.0 - p1, p1])

    def action_prob_grads(self, states) -> np.ndarray:
        """(N, 2, p) array of d pi(a|s) / d theta."""
        X = as_state_matrix(states, self.p)
        p1 = expit(X @ self.theta)
        g1 = (p1 * (1.0 - p1))[:, None] * X
        out = np.empty((X.shape[0], 2, self.p))
        out[:, 1, :] = g1
        out[:, 0, :] = -g1
        return out

    def to_json(self) -> str:
        return json.dumps({"theta": [float(x) for x in self.theta], "c0": float(self.c0)})

    @classmethod
    def from_json(cls, text: str) -> "LogisticPolicy":
        obj = json.loads(text)
        return cls(theta=np.asarray(obj["theta"], dtype=float), c0=float(obj["c0"]))


def action_prob(pol: LogisticPolicy, s, a) -> float:
    """pi(a|s); the a=0 probability is computed as the exact complement."""
    a = check_action_index(a, pol.n_actions)
    p1 = float(expit(np.asarray(s, dtype=float) @ pol.theta))
    return p1 if a == 1 else 1.0 - p1


def grad_action_prob(pol: LogisticPolicy, s, a) -> np.ndarray:
    a = check_action_index(a, pol.n_actions)
    s = np.asarray(s, dtype=float)
    p1 = float(expit(s @ pol.theta))
    g = p1 * (1.0 - p1) * s
    return g if a == 1 else -g


def sample_action(pol: LogisticPolicy, s, rng: np.random.Generator) -> int:
    p1 = action_prob(pol, s, 1)
    return int(rng.random() < p1)


def sample_actions(pol: LogisticPolicy, states, rng: np.random.Generator) -> np.ndarray:
    """Vectorized sampling, one action per row of ``states``."""
    p1 = pol.action_probs(states)[:, 1]
    return (rng.random(p1.shape[0]) < p1).astype(int)


def project_box(theta, c0: float) -> np.ndarray:
    """Componentwise clamp to [-c0, c0]."""
    return np.clip(np.asarray(theta, dtype=float), -c0, c0)
