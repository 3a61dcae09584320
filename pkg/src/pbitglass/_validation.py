"""Input checks shared by the estimators and the functional API."""
import numbers

import numpy as np


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_spins(state, n=None, name="state"):
    """Return ``state`` as a contiguous int8 vector over {-1, +1}."""
    arr = np.asarray(state)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all((arr == 1) | (arr == -1)):
        raise ValueError(f"{name} entries must be exactly -1 or +1")
    return np.ascontiguousarray(arr, dtype=np.int8)


def check_beta(beta, name="beta"):
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"{name} must be a finite non-negative number, got {beta}")
    return beta


def check_graph(graph):
    from .instance import CouplingGraph

    if not isinstance(graph, CouplingGraph):
        raise TypeError(f"expected a CouplingGraph, got {type(graph).__name__}")
    return graph
