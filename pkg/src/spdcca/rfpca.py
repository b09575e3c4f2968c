"""Intrinsic Riemannian functional PCA for SPD-valued curves.

Pipeline: pointwise Fréchet mean curve, log maps into the tangent bundle,
coordinates relative to an explicit orthonormal frame, multivariate
functional PCA of the coefficient curves, and principal-component fields
with their quadrature scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ConvergenceError, NumericError, ValidationError
from .fields import SPDCurve, TangentField, TimeGrid

# Relative eigenvalue cutoff below which the coefficient covariance is
# treated as rank deficient for the requested number of components.
RANK_REL_TOL = 1e-12

# Whitened log fields are dimensionless; total variation at or below this
# absolute level is indistinguishable from roundoff on identical curves.
VARIATION_FLOOR = 1e-24


def frame_dim(m: int) -> int:
    return m * (m + 1) // 2


def frame_index_pairs(m: int):
    """Coordinate pairs in frame order: diagonal terms first, then i<j."""
    pairs = [(i, i) for i in range(m)]
    pairs.extend((i, j) for i in range(m) for j in range(i + 1, m))
    return pairs


def frame_at(f) -> np.ndarray:
    """Orthonormal frame of T_F M for the affine-invariant metric.

    With s_i the columns of F^{1/2}, the elements are s_i s_i^T on the
    diagonal slots and (s_i s_j^T + s_j s_i^T)/sqrt(2) for i < j.  Returns an
    (M, m, m) array with M = m(m+1)/2, pairwise orthonormal under
    riem_inner(F, ., .).
    """
    f = geometry.check_symmetric(f, "frame base point")
    if f.ndim != 2:
        raise ValidationError("frame_at expects a single SPD matrix")
    s = geometry.spd_sqrt(f, "frame base point")
    m = f.shape[0]
    out = np.empty((frame_dim(m), m, m))
    for k, (i, j) in enumerate(frame_index_pairs(m)):
        if i == j:
            out[k] = np.outer(s[:, i], s[:, i])
        else:
            out[k] = (np.outer(s[:, i], s[:, j]) + np.outer(s[:, j], s[:, i])) / np.sqrt(2.0)
    return out


def sym_to_coeffs(a) -> np.ndarray:
    """Coordinates of symmetric matrices in the frame order at identity.

    Diagonal entries then sqrt(2) times the upper off-diagonal entries, so the
    Euclidean inner product of coefficient vectors equals the Frobenius inner
    product of the matrices.  Works on stacks (..., m, m) -> (..., M).
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[-1]
    cols = [a[..., i, i] for i in range(m)]
    cols.extend(
        np.sqrt(2.0) * a[..., i, j] for i in range(m) for j in range(i + 1, m)
    )
    return np.stack(cols, axis=-1)


def coeffs_to_sym(z, m: int) -> np.ndarray:
    """Inverse of sym_to_coeffs; stacks (..., M) -> (..., m, m)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != frame_dim(m):
        raise ValidationError("coefficient vector length does not match dimension")
    out = np.zeros(z.shape[:-1] + (m, m))
    for k, (i, j) in enumerate(frame_index_pairs(m)):
        if i == j:
            out[..., i, i] = z[..., k]
        else:
            out[..., i, j] = z[..., k] / np.sqrt(2.0)
            out[..., j, i] = z[..., k] / np.sqrt(2.0)
    return out


def coefficients(v: TangentField) -> np.ndarray:
    """Frame coefficients Z[l, k] = <V(t_l), E_k(mu(t_l))>_{mu(t_l)} as (L, M).

    Equivalent to whitening the field by mu^{-1/2} on both sides and reading
    off the sym_to_coeffs coordinates, which is how it is computed.
    """
    isq = geometry.spd_inv_sqrt(v.base.values, "field base curve")
    whitened = geometry.sym(isq @ v.values @ isq)
    return sym_to_coeffs(whitened)


def field_from_coefficients(mu: SPDCurve, z) -> TangentField:
    """Rebuild sum_k Z_k(t) E_k(mu(t)) from frame coefficients (L, M)."""
    z = np.asarray(z, dtype=float)
    s = geometry.spd_sqrt(mu.values, "base curve")
    mats = coeffs_to_sym(z, mu.dim)
    return TangentField(base=mu, values=geometry.sym(s @ mats @ s))


def frechet_mean_curve(curves, tol=1e-10, max_iter=200) -> SPDCurve:
    """Pointwise Fréchet mean of curves sharing one grid."""
    if len(curves) == 0:
        raise ValidationError("need at least one curve")
    grid = curves[0].grid
    for c in curves[1:]:
        if not grid.matches(c.grid) or c.values.shape != curves[0].values.shape:
            raise ValidationError("curves do not share a grid and dimension")
    stack = np.stack([c.values for c in curves])  # (N, L, m, m)
    means = np.empty_like(stack[0])
    for l in range(grid.size):
        try:
            means[l] = geometry.frechet_mean(stack[:, l], tol=tol, max_iter=max_iter)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"Frechet mean failed at time index {l}: {exc}",
                last_iterate=exc.last_iterate,
                residual=exc.residual,
            ) from exc
    return SPDCurve(grid=grid, values=means)


def _flip_signs(pis, scores=None):
    """Make each component's largest-|coefficient| entry positive (first index wins ties)."""
    pis = pis.copy()
    for j in range(pis.shape[0]):
        flat = pis[j].ravel()
        k = int(np.argmax(np.abs(flat)))
        if flat[k] < 0:
            pis[j] = -pis[j]
            if scores is not None:
                scores[:, j] = -scores[:, j]
    return pis


def mfpca(z_all, d: int, grid: TimeGrid, cap_rank=False):
    """Multivariate functional PCA of coefficient curves.

    z_all is (N, L, M).  Curves are centered internally, weighted by the
    square roots of the quadrature weights and flattened; the eigenproblem is
    solved on the N x N Gram matrix when N < L*M and on the (L*M) x (L*M)
    covariance otherwise.  Returns (pis, omegas) with pis of shape (d, L, M)
    orthonormal in the weighted inner product sum_l w_l pi_j(t_l)^T pi_k(t_l)
    and omegas the score variances, sorted descending.

    Requesting d beyond the effective rank of the covariance is an error
    unless cap_rank is set, in which case d is reduced to that rank.
    """
    z_all = np.asarray(z_all, dtype=float)
    if z_all.ndim != 3:
        raise ValidationError("expected coefficient curves of shape (N, L, M)")
    n, nl, nm = z_all.shape
    if nl != grid.size:
        raise ValidationError("coefficient curves do not match the grid")
    if not (1 <= d <= min(n - 1, nl * nm)):
        raise ValidationError(
            f"d={d} must satisfy 1 <= d <= min(N-1, L*M) = {min(n - 1, nl * nm)}"
        )
    centered = z_all - z_all.mean(axis=0)
    sqw = np.sqrt(grid.weights)
    b = (centered * sqw[None, :, None]).reshape(n, nl * nm)
    gram_route = n < nl * nm
    mat = (b @ b.T) / n if gram_route else (b.T @ b) / n
    evals, evecs = np.linalg.eigh(mat)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    d = _checked_rank(evals, d, cap_rank)
    top = evals[:d]
    if gram_route:
        vecs = (b.T @ evecs[:, :d]) / np.sqrt(n * top)[None, :]
    else:
        vecs = evecs[:, :d]
    pis = (vecs.T).reshape(d, nl, nm) / sqw[None, :, None]
    pis = _flip_signs(pis)
    return pis, top.copy()


def _checked_rank(evals, d, cap_rank):
    largest = evals[0]
    if largest <= VARIATION_FLOOR:
        raise NumericError("coefficient covariance is zero: no variation in the data")
    usable = int(np.sum(evals > RANK_REL_TOL * largest))
    if d <= usable:
        return d
    if cap_rank:
        return usable
    raise NumericError(
        f"coefficient covariance is rank deficient for d={d}: "
        f"eigenvalue {evals[d - 1]:.3e} vs largest {largest:.3e}"
    )


@dataclass(frozen=True)
class RFPCABasis:
    """Estimated mean curve, principal component fields, and eigenvalues."""

    mean_curve: SPDCurve
    components: tuple  # d TangentField along mean_curve
    eigenvalues: np.ndarray  # (d,), descending, positive

    @property
    def rank(self):
        return len(self.components)


def rfpca_fit(curves, d: int, mean_curve: SPDCurve | None = None,
              mean_tol=1e-10, mean_max_iter=200, cap_rank=False):
    """Riemannian functional PCA of SPD-valued curves.

    Returns (RFPCABasis, scores) where scores is the (N, d) matrix of
    quadrature inner products of Log_mu(y_i) with the component fields.
    `mean_curve` may be supplied to bypass the Fréchet mean estimate;
    `cap_rank` reduces d to the effective rank instead of erroring.
    """
    if len(curves) < 2:
        raise ValidationError("rfpca_fit needs at least two curves")
    mu = mean_curve if mean_curve is not None else frechet_mean_curve(
        curves, tol=mean_tol, max_iter=mean_max_iter
    )
    if not mu.grid.matches(curves[0].grid):
        raise ValidationError("mean curve grid does not match the data grid")
    grid = mu.grid
    isq = geometry.spd_inv_sqrt(mu.values, "mean curve")
    s = geometry.spd_sqrt(mu.values, "mean curve")
    stack = np.stack([c.values for c in curves])  # (N, L, m, m)
    logs = geometry.riem_log(mu.values, stack)
    z_all = sym_to_coeffs(geometry.sym(isq @ logs @ isq))  # (N, L, M)
    pis, omegas = mfpca(z_all, d, grid, cap_rank=cap_rank)
    components = tuple(
        TangentField(base=mu, values=geometry.sym(s @ coeffs_to_sym(pis[j], mu.dim) @ s))
        for j in range(pis.shape[0])
    )
    scores = np.einsum("nlk,jlk,l->nj", z_all, pis, grid.weights)
    basis = RFPCABasis(mean_curve=mu, components=components, eigenvalues=omegas)
    return basis, scores
