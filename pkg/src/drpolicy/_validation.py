"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when user-supplied data or configuration is malformed."""


def check_finite(name, arr):
    """Raise if ``arr`` contains NaN or infinities."""
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")


def as_float_array(name, arr, ndim=None):
    out = np.asarray(arr, dtype=float)
    if ndim is not None and out.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {out.shape}")
    check_finite(name, out)
    return out


def as_state_matrix(X, p=None):
    """Coerce ``X`` to an (n, p) float array of states.

    A single state vector of length p is promoted to shape (1, p).
    """
    out = np.asarray(X, dtype=float)
    if out.ndim == 1:
        out = out[None, :]
    if out.ndim != 2:
        raise ValidationError(f"states must be a vector or a 2-d array, got shape {out.shape}")
    if p is not None and out.shape[1] != p:
        raise ValidationError(f"states have dimension {out.shape[1]}, expected {p}")
    check_finite("states", out)
    return out


def check_action_index(a, n_actions):
    a = int(a)
    if not 0 <= a < n_actions:
        raise ValidationError(f"action index {a} outside {{0,...,{n_actions - 1}}}")
    return a


def check_probability_rows(name, probs, tol=1e-8):
    """Validate that each row of ``probs`` is a probability vector."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < -tol):
        raise ValidationError(f"{name} has negative entries")
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > max(tol, 1e-8)):
        raise ValidationError(f"{name} rows do not sum to 1 (max deviation {np.max(np.abs(sums - 1.0)):.3g})")
    return probs


def readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr
