"""Small input-validation helpers used by the model and estimator layers."""

import numpy as np


def as_float_vector(x, name="array", length=None):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_float_matrix(x, name="matrix", square=False):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_nonnegative(arr, name="array"):
    if np.any(np.asarray(arr) < 0):
        raise ValueError(f"{name} must be entrywise nonnegative")


def check_node_id(node, n_nodes, name="node"):
    if not 1 <= int(node) <= n_nodes:
        raise ValueError(f"{name} id {node} outside 1..{n_nodes}")
    return int(node)
