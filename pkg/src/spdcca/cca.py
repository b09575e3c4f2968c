"""Asymmetric sparse CCA for multivariate pairs, plus a classical-CCA oracle.

The sparse estimator regresses the whitened low-dimensional block on the
high-dimensional block under a row-sparse penalty, then reads the canonical
structure off the singular value decomposition of Sigma_X^{1/2} B.  Inputs
are assumed column-centered; covariances are uncentered second moments
Sigma_hat = (1/N) A^T A.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import grouplasso
from .errors import NumericError, ValidationError
from .grouplasso import SolverOptions

# Singular values at or below CORR_REL_TOL times the largest are dropped
# (their canonical vectors are undefined).
CORR_REL_TOL = 1e-10

# Relative gap below which neighboring correlations are flagged as tied.
TIE_REL_TOL = 1e-8


@dataclass(frozen=True)
class CCAModel:
    """Canonical vectors, loadings, and correlations of retained pairs.

    T is p x K with T^T Sigma_X T = I_K, H is d x K with H^T Sigma_Y H = I_K,
    correlations are sorted descending.  `tied` flags (near-)repeated
    correlations, where individual vectors are not identified.
    """

    T: np.ndarray
    H: np.ndarray
    correlations: np.ndarray
    K: int
    tied: bool = False


def inv_sqrt_psd(s, rel_tol=1e-10) -> np.ndarray:
    """Inverse square root of a symmetric PSD matrix via eigendecomposition.

    Raises NumericError naming the offending eigenvalue when any eigenvalue
    falls below rel_tol times the largest.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValidationError("inv_sqrt_psd expects a square matrix")
    s = 0.5 * (s + s.T)
    w, v = np.linalg.eigh(s)
    if w[-1] <= 0 or w[0] < rel_tol * w[-1]:
        raise NumericError(
            f"matrix is rank deficient: eigenvalue {w[0]:.6e} below "
            f"{rel_tol:g} x largest ({w[-1]:.6e})"
        )
    out = (v / np.sqrt(w)) @ v.T
    return 0.5 * (out + out.T)


def _joint_sign_fix(t, h):
    """Flip each (theta_k, eta_k) pair so eta_k's largest-|entry| is positive."""
    for k in range(h.shape[1]):
        j = int(np.argmax(np.abs(h[:, k])))
        if h[j, k] < 0:
            h[:, k] = -h[:, k]
            t[:, k] = -t[:, k]
    return t, h


def _model_from_regression(b, sigma_x, sigma_y_inv_sqrt) -> CCAModel:
    """Steps C and D: SVD of Sigma_X^{1/2} B, then T = B Htilde D^{-1}, H = Sigma_Y^{-1/2} Htilde."""
    p, d = b.shape
    w, v = np.linalg.eigh(sigma_x)
    w = np.clip(w, 0.0, None)
    sigma_x_sqrt = (v * np.sqrt(w)) @ v.T
    a = sigma_x_sqrt @ b
    _, dvals, vt = np.linalg.svd(a, full_matrices=False)
    htilde = vt.T
    if dvals.size == 0 or dvals[0] <= 0.0:
        k = 0
    else:
        k = int(np.sum(dvals > CORR_REL_TOL * dvals[0]))
    if k == 0:
        return CCAModel(
            T=np.zeros((p, 0)), H=np.zeros((d, 0)),
            correlations=np.zeros(0), K=0,
        )
    t = b @ htilde[:, :k] / dvals[:k][None, :]
    h = sigma_y_inv_sqrt @ htilde[:, :k]
    t, h = _joint_sign_fix(t, h)
    gaps = np.abs(np.diff(dvals[:k]))
    tied = bool(k > 1 and np.any(gaps <= TIE_REL_TOL * dvals[:k - 1]))
    return CCAModel(T=t, H=h, correlations=dvals[:k].copy(), K=k, tied=tied)


def sparse_cca(yd, x, lam, opts: SolverOptions | None = None,
               sigma_y=None) -> CCAModel:
    """Row-sparse asymmetric CCA of a low-dimensional Y block against X.

    Solves the group-lasso regression of Y Sigma_Y^{-1/2} on X, then extracts
    canonical vectors from the SVD of Sigma_X^{1/2} B.  `sigma_y` overrides
    the sample covariance (1/N) Y^T Y, e.g. with the diagonal of functional
    PC variances.  A lambda at or above lambda_max yields an all-zero B and a
    model with K = 0.
    """
    yd = np.asarray(yd, dtype=float)
    x = np.asarray(x, dtype=float)
    if yd.ndim != 2 or x.ndim != 2 or yd.shape[0] != x.shape[0]:
        raise ValidationError("Y and X must be 2-d with matching row counts")
    n, d = yd.shape
    p = x.shape[1]
    if d > min(p, n - 1):
        raise ValidationError(f"need d <= min(p, N-1), got d={d}, p={p}, N={n}")
    sy = (yd.T @ yd) / n if sigma_y is None else np.asarray(sigma_y, dtype=float)
    ry = inv_sqrt_psd(sy)
    target = yd @ ry
    b = grouplasso.solve(x, target, lam, opts=opts)
    sigma_x = (x.T @ x) / n
    model = _model_from_regression(b, sigma_x, ry)
    if model.K == 0:
        warnings.warn("all rows of B are zero (lambda too large): model has K=0")
    return model


def classical_cca(yd, x) -> CCAModel:
    """Classical multivariate CCA through the SVD of the whitened cross-covariance.

    Canonical vectors are Sigma_X^{-1/2} U and Sigma_Y^{-1/2} V for the SVD
    U Gamma V^T = Sigma_X^{-1/2} Sigma_XY Sigma_Y^{-1/2}; correlations are the
    singular values.  Used as an independent oracle for sparse_cca at lambda=0.
    """
    yd = np.asarray(yd, dtype=float)
    x = np.asarray(x, dtype=float)
    if yd.ndim != 2 or x.ndim != 2 or yd.shape[0] != x.shape[0]:
        raise ValidationError("Y and X must be 2-d with matching row counts")
    n, d = yd.shape
    p = x.shape[1]
    if not (n > p >= d):
        raise ValidationError(f"classical CCA needs N > p >= d, got N={n}, p={p}, d={d}")
    sigma_x = (x.T @ x) / n
    sigma_y = (yd.T @ yd) / n
    sigma_xy = (x.T @ yd) / n
    rx = inv_sqrt_psd(sigma_x)
    ry = inv_sqrt_psd(sigma_y)
    u, dvals, vt = np.linalg.svd(rx @ sigma_xy @ ry, full_matrices=False)
    if dvals.size and dvals[0] > 0:
        k = int(np.sum(dvals > CORR_REL_TOL * dvals[0]))
    else:
        k = 0
    t = rx @ u[:, :k]
    h = ry @ vt.T[:, :k]
    t, h = _joint_sign_fix(t, h)
    gaps = np.abs(np.diff(dvals[:k]))
    tied = bool(k > 1 and np.any(gaps <= TIE_REL_TOL * dvals[:k - 1]))
    return CCAModel(T=t, H=h, correlations=dvals[:k].copy(), K=k, tied=tied)
