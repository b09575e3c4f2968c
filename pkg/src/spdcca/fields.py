"""Discrete SPD-valued curves and tangent vector fields along them.

Curves live on a shared strictly-increasing time grid with trapezoid
quadrature weights; a tangent field assigns one symmetric matrix to each grid
point and is anchored to the curve it lives along.  The L2 inner product of
two fields along the same curve is the quadrature sum of pointwise
affine-invariant inner products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ValidationError


def trapezoid_weights(points):
    pts = np.asarray(points, dtype=float)
    h = np.diff(pts)
    w = np.zeros_like(pts)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time points with quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        wts = np.asarray(self.weights, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValidationError("time grid needs at least two points")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("time grid points must be strictly increasing")
        if wts.shape != pts.shape or np.any(wts <= 0):
            raise ValidationError("quadrature weights must be positive, one per point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def from_points(cls, points):
        return cls(points=np.asarray(points, dtype=float), weights=trapezoid_weights(points))

    @classmethod
    def regular(cls, start, stop, num):
        return cls.from_points(np.linspace(start, stop, num))

    @property
    def size(self):
        return self.points.size

    def matches(self, other):
        return self.points.shape == other.points.shape and np.array_equal(
            self.points, other.points
        )


def _check_spd_stack(values, context):
    """Validate a (L, m, m) stack of SPD matrices; report the offending index."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or values.shape[-1] != values.shape[-2]:
        raise ValidationError(f"{context}: expected a stack of square matrices")
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    skew = np.abs(values - np.swapaxes(values, -1, -2)).max(axis=(-1, -2))
    bad = np.nonzero(skew > geometry.SYM_REL_TOL * scale)[0]
    if bad.size:
        raise ValidationError(f"{context}: value at index {bad[0]} is not symmetric")
    values = geometry.sym(values)
    try:
        np.linalg.cholesky(values)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(values)
        bad = np.nonzero(eigs[:, 0] <= 0)[0]
        idx = int(bad[0]) if bad.size else 0
        raise ValidationError(
            f"{context}: value at index {idx} is not positive definite"
        ) from None
    return values


@dataclass(frozen=True, eq=False)
class SPDCurve:
    """An SPD matrix per grid point."""

    grid: TimeGrid
    values: np.ndarray  # (L, m, m)

    def __post_init__(self):
        values = _check_spd_stack(self.values, "SPD curve")
        if values.shape[0] != self.grid.size:
            raise ValidationError("curve length does not match its grid")
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.values.shape[-1]


@dataclass(frozen=True, eq=False)
class TangentField:
    """A symmetric matrix per grid point, anchored to a base curve."""

    base: SPDCurve
    values: np.ndarray  # (L, m, m)

    def __post_init__(self):
        values = geometry.check_symmetric(self.values, "tangent field values")
        if values.ndim != 3 or values.shape != self.base.values.shape:
            raise ValidationError("tangent field shape does not match its base curve")
        object.__setattr__(self, "values", values)

    @property
    def grid(self):
        return self.base.grid

    @property
    def dim(self):
        return self.values.shape[-1]


def _check_shared(a, b, what="curves"):
    if not a.grid.matches(b.grid):
        raise ValidationError(f"{what} do not share a time grid")
    if a.values.shape != b.values.shape:
        raise ValidationError(f"{what} have mismatched dimensions")


def _check_same_base(u: TangentField, v: TangentField):
    _check_shared(u, v, "tangent fields")
    ref = max(1.0, float(np.max(np.abs(u.base.values))))
    if float(np.max(np.abs(u.base.values - v.base.values))) > 1e-8 * ref:
        raise ValidationError("tangent fields lie along different base curves")


def log_curve(mu: SPDCurve, y: SPDCurve) -> TangentField:
    """Pointwise log map t -> Log_{mu(t)} y(t), a field along mu."""
    _check_shared(mu, y)
    return TangentField(base=mu, values=geometry.riem_log(mu.values, y.values))


def exp_curve(mu: SPDCurve, v: TangentField) -> SPDCurve:
    """Pointwise exp map t -> Exp_{mu(t)} V(t)."""
    _check_shared(mu, v.base, "curve and field base")
    return SPDCurve(grid=mu.grid, values=geometry.riem_exp(mu.values, v.values))


def field_inner(u: TangentField, v: TangentField) -> float:
    """Quadrature approximation of the L2(T mu) inner product <<U, V>>."""
    _check_same_base(u, v)
    pointwise = geometry.riem_inner(u.base.values, u.values, v.values)
    return float(np.dot(u.grid.weights, pointwise))


def field_norm(u: TangentField) -> float:
    return float(np.sqrt(max(field_inner(u, u), 0.0)))


def transport_field(u: TangentField, h: SPDCurve) -> TangentField:
    """Carry a field along f to a field along h by pointwise parallel transport."""
    _check_shared(u.base, h, "field base and target curve")
    moved = geometry.parallel_transport(u.base.values, h.values, u.values)
    return TangentField(base=h, values=moved)
