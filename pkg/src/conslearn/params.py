"""Flat parameter-vector arithmetic.

A parameter vector is a 1-D float64 numpy array holding every model
parameter in a fixed, layer-major order. It is the unit exchanged between
nodes, so all nodes in a run must agree on its length.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError

def as_param_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionError(f"parameter vector must be 1-D, got shape {vec.shape}")
    return vec


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma must lie in the open interval (0, 1), got {gamma}")
    return gamma


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def weighted_delta(local, received, gamma: float) -> np.ndarray:
    """Return ``gamma * (received - local)``.

    This is the step a receiving node takes toward an incoming estimate, and
    also the correction it sends back to the originator.
    """
    local = as_param_vector(local)
    received = as_param_vector(received)
    _check_same_length(local, received)
    gamma = check_gamma(gamma)
    return gamma * (received - local)


def add_in_place(target: np.ndarray, delta, sign: int = 1) -> np.ndarray:
    """``target += sign * delta`` in place; returns ``target`` for chaining."""
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    delta = as_param_vector(delta)
    if target.ndim != 1:
        raise DimensionError(f"parameter vector must be 1-D, got shape {target.shape}")
    _check_same_length(target, delta)
    if sign == 1:
        target += delta
    else:
        target -= delta
    return target


def pair_update(p_i, p_j, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """One completed exchange: ``i`` sends its weights to ``j`` and applies the reply.

    Returns new arrays ``(p_i', p_j')``; the inputs are left untouched.
    """
    p_i = as_param_vector(p_i).copy()
    p_j = as_param_vector(p_j).copy()
    delta = weighted_delta(p_j, p_i, gamma)
    add_in_place(p_j, delta, +1)
    add_in_place(p_i, delta, -1)
    return p_i, p_j
