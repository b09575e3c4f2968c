"""Row-sparse multivariate regression solved by accelerated proximal gradient.

Objective, for X (N x p), M (N x d), B (p x d):

    f(B) = (2/N) ||M - X B||_F^2 + lambda * sum_i ||b_i||_2

where b_i are the rows of B.  The penalty zeroes whole rows, so all response
columns share one sparsity pattern.  The solver is FISTA with a fixed step
1/L, L = (4/N) sigma_max(X^T X), gradient-based adaptive restart, and a KKT
certificate checked at the candidate solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ValidationError


@dataclass
class SolverOptions:
    tol: float = 1e-9          # relative objective change
    max_iter: int = 50_000
    kkt_tol: float = 1e-9      # subgradient optimality certificate
    step: str = "fixed_lipschitz"

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.kkt_tol <= 0:
            raise ValidationError("solver options must have tol > 0, kkt_tol > 0, max_iter >= 1")
        if self.step != "fixed_lipschitz":
            raise ValidationError(f"unknown step policy {self.step!r}")


def _check_problem(x, m, b=None):
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    if x.ndim != 2 or m.ndim != 2 or x.shape[0] != m.shape[0]:
        raise ValidationError("X and M must be 2-d with matching row counts")
    if x.shape[0] < 2:
        raise ValidationError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(m))):
        raise ValidationError("X and M must be finite")
    if b is not None:
        b = np.asarray(b, dtype=float)
        if b.shape != (x.shape[1], m.shape[1]):
            raise ValidationError(
                f"B must have shape {(x.shape[1], m.shape[1])}, got {b.shape}"
            )
        return x, m, b
    return x, m


def objective(x, m, b, lam) -> float:
    x, m, b = _check_problem(x, m, b)
    resid = m - x @ b
    n = x.shape[0]
    return float(
        (2.0 / n) * np.sum(resid * resid) + lam * np.sum(np.linalg.norm(b, axis=1))
    )


def _grad(x, m, b, n):
    return (-4.0 / n) * (x.T @ (m - x @ b))


def lambda_max(x, m) -> float:
    """Smallest lambda at which B = 0 is optimal: (4/N) max_i ||(X^T M)_i||_2."""
    x, m = _check_problem(x, m)
    n = x.shape[0]
    return float((4.0 / n) * np.max(np.linalg.norm(x.T @ m, axis=1), initial=0.0))


def _row_prox(v, thresh):
    """Group soft-thresholding: scale each row by (1 - thresh/||v_i||)_+."""
    norms = np.linalg.norm(v, axis=1)
    scale = np.zeros_like(norms)
    np.divide(norms - thresh, norms, out=scale, where=norms > thresh)
    return v * scale[:, None]


def kkt_residual(x, m, lam, b) -> float:
    """Max row-wise violation of the subgradient optimality conditions.

    With g = -(4/N) X^T (M - XB): active rows contribute
    ||g_i + lam b_i/||b_i||||_2 and zero rows (||g_i||_2 - lam)_+.
    """
    x, m, b = _check_problem(x, m, b)
    n = x.shape[0]
    g = _grad(x, m, b, n)
    row_norms = np.linalg.norm(b, axis=1)
    active = row_norms > 0
    res = np.maximum(np.linalg.norm(g, axis=1) - lam, 0.0)
    if np.any(active):
        unit = b[active] / row_norms[active][:, None]
        res[active] = np.linalg.norm(g[active] + lam * unit, axis=1)
    return float(np.max(res, initial=0.0))


def solve(x, m, lam, opts: SolverOptions | None = None, b0=None, return_info=False):
    """Minimize the group-lasso objective; deterministic for fixed inputs.

    Stops when the relative objective change falls below opts.tol and the KKT
    residual at the iterate is below opts.kkt_tol.  Raises ConvergenceError
    (carrying the last iterate and KKT residual) if max_iter is exhausted.
    """
    if lam < 0:
        raise ValidationError("lambda must be nonnegative")
    opts = opts or SolverOptions()
    x, m = _check_problem(x, m)
    n, p = x.shape
    d = m.shape[1]
    if lam > 0.0 and lam >= lambda_max(x, m):
        # B = 0 satisfies the stationarity conditions exactly
        b = np.zeros((p, d))
        if return_info:
            info = {"iterations": 0, "kkt": kkt_residual(x, m, lam, b),
                    "objective": np.array([objective(x, m, b, lam)])}
            return b, info
        return b
    lip = (4.0 / n) * np.linalg.norm(x, 2) ** 2
    if lip == 0.0:
        raise ValidationError("design matrix is identically zero")
    step = 1.0 / lip
    b = np.zeros((p, d)) if b0 is None else np.array(b0, dtype=float)
    if b.shape != (p, d):
        raise ValidationError(f"warm start must have shape {(p, d)}")
    z = b.copy()
    theta = 1.0
    f_prev = objective(x, m, b, lam)
    trace = [f_prev] if return_info else None
    kkt = np.inf
    check_span = 10  # re-certify KKT at most this often while stalled
    last_kkt_iter = -check_span
    for it in range(opts.max_iter):
        g = _grad(x, m, z, n)
        b_new = _row_prox(z - step * g, step * lam)
        # adaptive restart when the momentum direction opposes the step
        if np.sum((z - b_new) * (b_new - b)) > 0.0:
            theta = 1.0
            z = b_new.copy()
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            z = b_new + ((theta - 1.0) / theta_new) * (b_new - b)
            theta = theta_new
        f_new = objective(x, m, b_new, lam)
        if trace is not None:
            trace.append(f_new)
        stalled = abs(f_prev - f_new) <= opts.tol * max(1.0, abs(f_new))
        b, f_prev = b_new, f_new
        if stalled and it - last_kkt_iter >= check_span:
            kkt = kkt_residual(x, m, lam, b)
            last_kkt_iter = it
            if kkt <= opts.kkt_tol:
                if return_info:
                    return b, {"iterations": it + 1, "kkt": kkt, "objective": np.array(trace)}
                return b
    kkt = kkt_residual(x, m, lam, b)
    if kkt <= opts.kkt_tol:
        if return_info:
            return b, {"iterations": opts.max_iter, "kkt": kkt, "objective": np.array(trace)}
        return b
    raise ConvergenceError(
        f"group lasso solver hit max_iter={opts.max_iter} (KKT residual {kkt:.3e})",
        last_iterate=b,
        residual=kkt,
    )


def lambda_grid(lam_max, num=100, min_ratio=1e-3):
    """Descending log-spaced grid from lam_max down to min_ratio * lam_max."""
    if lam_max <= 0:
        raise ValidationError("lambda_max must be positive to build a grid")
    return np.geomspace(lam_max, min_ratio * lam_max, num)


@dataclass(frozen=True)
class CVPathResult:
    lambdas: np.ndarray
    mean_error: np.ndarray
    sd_error: np.ndarray
    lambda_min: float
    lambda_1se: float
    fold_errors: np.ndarray  # (folds, n_lambdas)


def cv_path(x, m, lambdas, folds: int, seed: int,
            opts: SolverOptions | None = None) -> CVPathResult:
    """K-fold cross-validation of held-out error along a descending lambda path.

    Folds are a seeded permutation split into near-equal blocks; within each
    fold the path is warm-started from the previous lambda.  Held-out error is
    (2/N_val) ||M_val - X_val B||_F^2.  Reports per-lambda mean and sd, the
    argmin lambda, and the largest lambda within one sd of the minimum.
    """
    x, m = _check_problem(x, m)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0 or np.any(np.diff(lambdas) > 0):
        raise ValidationError("lambdas must be a nonempty descending grid")
    n = x.shape[0]
    if folds < 2 or n < folds:
        raise ValidationError("need 2 <= folds <= N")
    perm = np.random.default_rng(seed).permutation(n)
    blocks = np.array_split(perm, folds)
    fold_errors = np.empty((folds, lambdas.size))
    for f, val_idx in enumerate(blocks):
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        x_tr, m_tr = x[mask], m[mask]
        x_val, m_val = x[val_idx], m[val_idx]
        b = np.zeros((x.shape[1], m.shape[1]))
        for j, lam in enumerate(lambdas):
            b = solve(x_tr, m_tr, lam, opts=opts, b0=b)
            resid = m_val - x_val @ b
            fold_errors[f, j] = (2.0 / val_idx.size) * np.sum(resid * resid)
    mean_error = fold_errors.mean(axis=0)
    sd_error = fold_errors.std(axis=0, ddof=1)
    j_min = int(np.argmin(mean_error))
    cutoff = mean_error[j_min] + sd_error[j_min]
    j_1se = int(np.nonzero(mean_error <= cutoff)[0][0])  # grid descends: first = largest
    return CVPathResult(
        lambdas=lambdas,
        mean_error=mean_error,
        sd_error=sd_error,
        lambda_min=float(lambdas[j_min]),
        lambda_1se=float(lambdas[j_1se]),
        fold_errors=fold_errors,
    )
