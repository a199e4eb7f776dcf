"""Trajectory containers and CSV ingestion for batch MDP data.

A dataset holds n episodes of equal length t0: states of dimension p
(including the terminal state of each episode), integer actions and
per-transition rewards.  All kernel matrices downstream index transitions
in episode-major flatten order h = i*t0 + t.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError, check_finite, readonly

CSV_STATE_PREFIX = "s"


@dataclass(frozen=True)
class TransitionTuple:
    """One (s, a, r, s') transition."""

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray


@dataclass(frozen=True)
class RobustConfig:
    """Configuration of the robust criterion.

    c is the total-variation radius of the uncertainty ball; beta_box the
    closed interval scanned for the dual variable (None means the observed
    reward range); tol_solve bounds acceptable linear-system residuals.
    """

    c: float = 0.1
    beta_box: tuple[float, float] | None = None
    tol_solve: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise ValidationError(f"robustness level c must be in [0, 1), got {self.c}")
        if self.beta_box is not None:
            lo, hi = self.beta_box
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValidationError(f"beta_box must be a nonempty finite interval, got {self.beta_box}")
        if self.tol_solve <= 0:
            raise ValidationError("tol_solve must be positive")


@dataclass(frozen=True)
class Dataset:
    """Batch of n equal-length trajectories.

    states   : (n, t0+1, p) float array, terminal state included
    actions  : (n, t0) integer array with values in {0, ..., n_actions-1}
    rewards  : (n, t0) float array, reward observed at the current state
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    n_actions: int = 2

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        actions = np.asarray(self.actions)
        rewards = np.asarray(self.rewards, dtype=float)
        if states.ndim != 3:
            raise ValidationError(f"states must have shape (n, t0+1, p), got {states.shape}")
        n, t_plus_1, p = states.shape
        t0 = t_plus_1 - 1
        if n < 1 or t0 < 1 or p < 1:
            raise ValidationError(f"need n >= 1, t0 >= 1, p >= 1, got n={n}, t0={t0}, p={p}")
        if actions.shape != (n, t0):
            raise ValidationError(f"actions must have shape ({n}, {t0}), got {actions.shape}")
        if rewards.shape != (n, t0):
            raise ValidationError(f"rewards must have shape ({n}, {t0}), got {rewards.shape}")
        if not np.issubdtype(actions.dtype, np.integer):
            if not np.all(actions == actions.astype(int)):
                raise ValidationError("actions must be integers")
            actions = actions.astype(int)
        if self.n_actions < 2:
            raise ValidationError("n_actions must be at least 2")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise ValidationError(
                f"action indices must lie in {{0,...,{self.n_actions - 1}}}, "
                f"got range [{actions.min()}, {actions.max()}]"
            )
        check_finite("states", states)
        check_finite("rewards", rewards)
        object.__setattr__(self, "states", readonly(states))
        object.__setattr__(self, "actions", readonly(actions))
        object.__setattr__(self, "rewards", readonly(rewards))

    @property
    def n(self):
        return self.states.shape[0]

    @property
    def t0(self):
        return self.states.shape[1] - 1

    @property
    def p(self):
        return self.states.shape[2]

    @property
    def n_transitions(self):
        return self.n * self.t0


def flatten_transitions(d: Dataset) -> list[TransitionTuple]:
    """Enumerate transitions in episode-major order, h = i*t0 + t."""
    out = []
    for i in range(d.n):
        for t in range(d.t0):
            out.append(
                TransitionTuple(
                    s=d.states[i, t],
                    a=int(d.actions[i, t]),
                    r=float(d.rewards[i, t]),
                    s_next=d.states[i, t + 1],
                )
            )
    return out


def flatten_arrays(d: Dataset):
    """Vectorized counterpart of flatten_transitions.

    Returns (S, A, R, S_next) with S, S_next of shape (N, p) and A, R of
    length N = n*t0, in the same episode-major order.
    """
    S = d.states[:, :-1, :].reshape(-1, d.p)
    S_next = d.states[:, 1:, :].reshape(-1, d.p)
    A = d.actions.reshape(-1)
    R = d.rewards.reshape(-1)
    return S, A, R, S_next


def reward_bounds(d: Dataset) -> tuple[float, float]:
    """Componentwise min/max of observed rewards, the default beta box."""
    return float(d.rewards.min()), float(d.rewards.max())


def _format_float(x: float) -> str:
    # repr of a Python float is the shortest decimal string that
    # round-trips exactly (<= 17 significant digits).
    return repr(float(x))


def save_dataset(d: Dataset, path) -> None:
    """Write the CSV form: header ``episode,t,s1,...,sp,a,r``; one terminal
    row per episode with empty action/reward fields."""
    header = ["episode", "t"] + [f"{CSV_STATE_PREFIX}{j + 1}" for j in range(d.p)] + ["a", "r"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(d.n):
            for t in range(d.t0):
                row = [i, t + 1] + [_format_float(x) for x in d.states[i, t]]
                row += [int(d.actions[i, t]), _format_float(d.rewards[i, t])]
                writer.writerow(row)
            terminal = [i, d.t0 + 1] + [_format_float(x) for x in d.states[i, d.t0]] + ["", ""]
            writer.writerow(terminal)


def load_dataset(path, p: int | None = None, n_actions: int = 2) -> Dataset:
    """Read a dataset from the CSV schema written by :func:`save_dataset`.

    Episodes must be contiguous blocks with consecutive 1-based t values and
    exactly one terminal row (empty action/reward) each; all episodes must
    have equal length.  ``p`` is inferred from the header when omitted.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("no episodes: file is empty") from None
        rows = [row for row in reader if row]

    state_cols = [h for h in header if h.startswith(CSV_STATE_PREFIX) and h[1:].isdigit()]
    inferred_p = len(state_cols)
    expected = ["episode", "t"] + [f"{CSV_STATE_PREFIX}{j + 1}" for j in range(inferred_p)] + ["a", "r"]
    if header != expected:
        raise ValidationError(f"malformed header {header!r}, expected {expected!r}")
    if p is not None and p != inferred_p:
        raise ValidationError(f"header has {inferred_p} state columns, expected p={p}")
    p = inferred_p
    if p < 1:
        raise ValidationError("header has no state columns")
    if not rows:
        raise ValidationError("no episodes: file has a header but no rows")

    episodes: dict[str, list[list[str]]] = {}
    order: list[str] = []
    last_key = None
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(expected):
            raise ValidationError(f"malformed row at line {lineno}: expected {len(expected)} fields")
        key = row[0]
        if key not in episodes:
            episodes[key] = []
            order.append(key)
        elif key != last_key:
            raise ValidationError(f"episode {key} is not a contiguous block (line {lineno})")
        episodes[key].append(row)
        last_key = key

    lengths = {len(v) for v in episodes.values()}
    if len(lengths) != 1:
        raise ValidationError(f"ragged episodes: lengths {sorted(lengths)}")
    length = lengths.pop()
    if length < 2:
        raise ValidationError("episodes need at least one transition plus a terminal row")
    t0 = length - 1
    n = len(order)

    states = np.empty((n, t0 + 1, p))
    actions = np.empty((n, t0), dtype=int)
    rewards = np.empty((n, t0))
    for i, key in enumerate(order):
        for j, row in enumerate(episodes[key]):
            try:
                t_val = int(row[1])
            except ValueError:
                raise ValidationError(f"malformed t value {row[1]!r} in episode {key}") from None
            if t_val != j + 1:
                raise ValidationError(f"episode {key} rows not ordered by t (saw t={t_val}, expected {j + 1})")
            try:
                states[i, j] = [float(x) for x in row[2 : 2 + p]]
            except ValueError:
                raise ValidationError(f"malformed state in episode {key}, t={t_val}") from None
            is_terminal = row[2 + p] == "" and row[3 + p] == ""
            if j < t0:
                if is_terminal:
                    raise ValidationError(f"episode {key} has a terminal row before t={t0 + 1}")
                try:
                    actions[i, j] = int(row[2 + p])
                    rewards[i, j] = float(row[3 + p])
                except ValueError:
                    raise ValidationError(f"malformed action/reward in episode {key}, t={t_val}") from None
                if not 0 <= actions[i, j] < n_actions:
                    raise ValidationError(f"unknown action index {actions[i, j]} in episode {key}")
            elif not is_terminal:
                raise ValidationError(f"episode {key} does not end with a terminal row")

    if not np.all(np.isfinite(states)) or not np.all(np.isfinite(rewards)):
        raise ValidationError("non-finite values in dataset")
    return Dataset(states=states, actions=actions, rewards=rewards, n_actions=n_actions)
