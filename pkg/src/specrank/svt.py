"""Exact singular-value shrinkage via full SVD.

These are the reference operators: the subspace proximal in
:mod:`specrank.lrsp` is validated against them, and they back the
nuclear-norm term of the reconstruction objective.
"""

from __future__ import annotations

import numpy as np


def _check_threshold(theta: float) -> float:
    theta = float(theta)
    if not np.isfinite(theta) or theta < 0.0:
        raise ValueError(f"shrinkage threshold must be finite and >= 0, got {theta}")
    return theta


def soft_threshold(v, theta: float) -> np.ndarray:
    """Elementwise soft shrinkage sign(v) * max(|v| - theta, 0)."""
    theta = _check_threshold(theta)
    a = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("soft_threshold input must be finite")
    return np.sign(a) * np.maximum(np.abs(a) - theta, 0.0)


def svt_full(m, theta: float) -> np.ndarray:
    """Singular-value thresholding of a matrix via a full SVD.

    Returns the exact proximal operator of ``theta * ||.||_*`` evaluated
    at ``m``: soft-threshold the singular values and recompose.
    """
    theta = _check_threshold(theta)
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("svt_full input must be finite")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return (u * np.maximum(s - theta, 0.0)) @ vt


def nuclear_norm(m) -> float:
    """Sum of singular values of ``m``."""
    a = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("nuclear_norm input must be finite")
    return float(np.linalg.svd(a, compute_uv=False).sum())


def numerical_rank(m) -> int:
    """Rank with the standard tolerance max(d, n) * eps * sigma_max."""
    a = np.asarray(m, dtype=float)
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(a.shape) * np.finfo(float).eps * s[0]
    return int(np.count_nonzero(s > tol))
