"""Affine-invariant Riemannian primitives on the manifold of SPD matrices.

Points are symmetric positive definite (SPD) matrices, tangent vectors are
symmetric matrices, and the metric at a point P is

    <W, Z>_P = tr(P^-1 W P^-1 Z).

All operations accept stacked inputs (matrices in the trailing two axes) and
broadcast like the underlying numpy linear algebra routines.  Matrix
functions (sqrt, log, exp) are evaluated through symmetric eigendecomposition
and the result is re-symmetrized to bound floating-point drift.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, NumericError, ValidationError

# An eigenvalue below EIG_REL_FLOOR times the largest eigenvalue is a hard
# error, never a silent clamp: SPD violations must fail loudly.
EIG_REL_FLOOR = 1e-12

# Symmetry tolerance relative to max(1, largest |entry|).
SYM_REL_TOL = 1e-12


def sym(a):
    """Symmetric part (A + A^T)/2 on the trailing two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def check_symmetric(a, what="matrix"):
    """Validate (near-)symmetry and return the symmetrized float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValidationError(f"{what} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    skew = float(np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0))
    if skew > SYM_REL_TOL * scale:
        raise ValidationError(f"{what} is not symmetric: max |A - A^T| = {skew:.3e}")
    return sym(a)


def _eigh_spd(p, what="matrix"):
    """Eigendecomposition of SPD input; hard error on eigenvalues below the floor."""
    w, v = np.linalg.eigh(p)
    wmax = w[..., -1]
    if np.any(wmax <= 0.0) or np.any(w[..., 0] < EIG_REL_FLOOR * wmax):
        worst = float(np.min(w))
        raise NumericError(
            f"{what} is not positive definite within tolerance: "
            f"smallest eigenvalue {worst:.6e}"
        )
    return w, v


def _rebuild(v, w):
    """Assemble V diag(w) V^T for stacked eigensystems."""
    return sym(np.einsum("...ij,...j,...kj->...ik", v, w, v))


def spd_sqrt(p, what="matrix"):
    w, v = _eigh_spd(np.asarray(p, dtype=float), what)
    return _rebuild(v, np.sqrt(w))


def spd_inv_sqrt(p, what="matrix"):
    w, v = _eigh_spd(np.asarray(p, dtype=float), what)
    return _rebuild(v, 1.0 / np.sqrt(w))


def spd_logm(p, what="matrix"):
    w, v = _eigh_spd(np.asarray(p, dtype=float), what)
    return _rebuild(v, np.log(w))


def sym_expm(a):
    """Matrix exponential of a symmetric matrix (always defined)."""
    w, v = np.linalg.eigh(sym(np.asarray(a, dtype=float)))
    return _rebuild(v, np.exp(w))


def _sqrt_factors(p, what="base point"):
    """Return (P^{1/2}, P^{-1/2}) for SPD input, both symmetrized."""
    w, v = _eigh_spd(np.asarray(p, dtype=float), what)
    rw = np.sqrt(w)
    return _rebuild(v, rw), _rebuild(v, 1.0 / rw)


def _check_same_dim(*mats):
    dims = {m.shape[-1] for m in mats}
    if len(dims) != 1:
        raise ValidationError(f"dimension mismatch: sizes {sorted(dims)}")


def riem_inner(p, w, z):
    """Affine-invariant inner product <W, Z>_P = tr(P^-1 W P^-1 Z)."""
    p = check_symmetric(p, "base point")
    w = check_symmetric(w, "tangent vector W")
    z = check_symmetric(z, "tangent vector Z")
    _check_same_dim(p, w, z)
    a = np.linalg.solve(p, w)
    b = np.linalg.solve(p, z)
    return np.einsum("...ij,...ji->...", a, b)


def riem_norm(p, w):
    """Metric norm sqrt(<W, W>_P)."""
    return np.sqrt(riem_inner(p, w, w))


def riem_exp(p, w):
    """Exponential map Exp_P(W) = P^{1/2} exp(P^{-1/2} W P^{-1/2}) P^{1/2}."""
    p = check_symmetric(p, "base point")
    w = check_symmetric(w, "tangent vector")
    _check_same_dim(p, w)
    s, isq = _sqrt_factors(p)
    return sym(s @ sym_expm(isq @ w @ isq) @ s)


def riem_log(p, q):
    """Logarithmic map Log_P(Q) = P^{1/2} log(P^{-1/2} Q P^{-1/2}) P^{1/2}."""
    p = check_symmetric(p, "base point")
    q = check_symmetric(q, "target point")
    _check_same_dim(p, q)
    s, isq = _sqrt_factors(p)
    a = sym(isq @ q @ isq)
    return sym(s @ spd_logm(a, "whitened target of Log") @ s)


def riem_dist(p, q):
    """Affine-invariant distance ||log(P^{-1/2} Q P^{-1/2})||_F."""
    p = check_symmetric(p, "first point")
    q = check_symmetric(q, "second point")
    _check_same_dim(p, q)
    _, isq = _sqrt_factors(p)
    a = sym(isq @ q @ isq)
    w, _ = _eigh_spd(a, "whitened argument of dist")
    return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))


def parallel_transport(p, q, w):
    """Parallel transport of W from T_P to T_Q along the connecting geodesic.

    Uses the closed form E W E^T with E = (Q P^-1)^{1/2}, computed stably as
    P^{1/2} (P^{-1/2} Q P^{-1/2})^{1/2} P^{-1/2}.  The map is an isometry for
    the affine-invariant metric.
    """
    p = check_symmetric(p, "source point")
    q = check_symmetric(q, "target point")
    w = check_symmetric(w, "tangent vector")
    _check_same_dim(p, q, w)
    s, isq = _sqrt_factors(p)
    a = sym(isq @ q @ isq)
    aw, av = _eigh_spd(a, "whitened target of transport")
    half = _rebuild(av, np.sqrt(aw))
    e = s @ half @ isq
    return sym(e @ w @ np.swapaxes(e, -1, -2))


def frechet_mean(points, tol=1e-10, max_iter=200):
    """Fréchet mean of SPD matrices under the affine-invariant metric.

    Fixed-point iteration mu <- Exp_mu(mean_i Log_mu(y_i)), started at the
    Euclidean average (itself SPD).  Returns mu with the tangent-space mean of
    logs at mu of metric norm at most `tol`.

    Raises ConvergenceError after `max_iter` iterations, carrying the last
    iterate and residual.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise ValidationError("frechet_mean expects a nonempty stack of square matrices")
    pts = check_symmetric(pts, "input points")
    mu = sym(pts.mean(axis=0))
    residual = np.inf
    for _ in range(max_iter):
        w, v = _eigh_spd(mu, "current mean iterate")
        rw = np.sqrt(w)
        s = _rebuild(v, rw)
        isq = _rebuild(v, 1.0 / rw)
        a = sym(isq @ pts @ isq)
        aw, av = _eigh_spd(a, "whitened sample")
        tbar = sym(_rebuild(av, np.log(aw)).mean(axis=0))
        # ||mean log||_mu equals the Frobenius norm in whitened coordinates
        residual = float(np.linalg.norm(tbar))
        if residual <= tol:
            return mu
        mu = sym(s @ sym_expm(tbar) @ s)
    raise ConvergenceError(
        f"Frechet mean did not reach tol={tol:g} in {max_iter} iterations "
        f"(residual {residual:.3e})",
        last_iterate=mu,
        residual=residual,
    )
