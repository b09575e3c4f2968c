"""End-to-end functional sparse CCA: RFPCA plus asymmetric sparse CCA.

Also provides the Euclidean variant (multivariate FPCA of vectorized curves
followed by the same CCA machinery) and joint cross-validation over the
functional rank d and the penalty lambda.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import cca as cca_mod
from . import grouplasso, rfpca
from .cca import CCAModel
from .errors import ValidationError
from .fields import TangentField, TimeGrid, exp_curve
from .grouplasso import SolverOptions
from .rfpca import RFPCABasis


@dataclass(frozen=True)
class FunctionalCCAModel:
    """RFPCA basis, CCA solution and the assembled canonical functions."""

    basis: RFPCABasis
    cca: CCAModel
    canonical_functions: tuple  # K TangentField along the mean curve
    x_mean: np.ndarray
    x_scale: np.ndarray

    @property
    def K(self):
        return self.cca.K


@dataclass(frozen=True)
class EuclideanFCCAModel:
    """Euclidean-variant model on vectorized curves (lower triangle, sqrt(2) off-diagonal)."""

    grid: TimeGrid
    mean: np.ndarray          # (L, M)
    components: np.ndarray    # (d, L, M)
    eigenvalues: np.ndarray   # (d,)
    cca: CCAModel
    canonical_functions: np.ndarray  # (K, L, M)
    x_mean: np.ndarray
    x_scale: np.ndarray

    @property
    def K(self):
        return self.cca.K


def _prepare_x(x, n_expected, center=True, scale=False):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != n_expected:
        raise ValidationError("X must be 2-d with one row per curve")
    mean = x.mean(axis=0) if center else np.zeros(x.shape[1])
    xc = x - mean
    if scale:
        sd = xc.std(axis=0, ddof=0)
        if np.any(sd <= 0):
            raise ValidationError("cannot scale X: a column has zero variance")
    else:
        sd = np.ones(x.shape[1])
    return xc / sd, mean, sd


def _whiten_scores(scores, omegas):
    return scores / np.sqrt(omegas)[None, :]


def assemble_model(basis: RFPCABasis, scores, x, lam,
                   opts: SolverOptions | None = None,
                   center_x=True, scale_x=False) -> FunctionalCCAModel:
    """CCA steps of the pipeline given a fitted RFPCA basis and its scores."""
    xc, x_mean, x_scale = _prepare_x(x, scores.shape[0], center_x, scale_x)
    sigma_y = np.diag(basis.eigenvalues)
    if lam >= grouplasso.lambda_max(xc, _whiten_scores(scores, basis.eigenvalues)):
        warnings.warn("lambda is at or above lambda_max: the fitted model has K=0")
    model = cca_mod.sparse_cca(scores, xc, lam, opts=opts, sigma_y=sigma_y)
    psis = tuple(
        _combine_components(basis, model.H[:, k]) for k in range(model.K)
    )
    return FunctionalCCAModel(
        basis=basis, cca=model, canonical_functions=psis,
        x_mean=x_mean, x_scale=x_scale,
    )


def _combine_components(basis: RFPCABasis, coeffs) -> TangentField:
    stacked = np.stack([c.values for c in basis.components])
    values = np.einsum("j,jlab->lab", coeffs, stacked)
    return TangentField(base=basis.mean_curve, values=values)


def fit(curves, x, d: int, lam: float, opts: SolverOptions | None = None,
        center_x=True, scale_x=False, precomputed=None) -> FunctionalCCAModel:
    """Fit the functional sparse CCA model at rank d and penalty lam.

    X is column-centered internally (the model assumes mean-zero covariates);
    optional standardization is controlled by scale_x.  `precomputed` may hold
    an (RFPCABasis, scores) pair from rfpca_fit to skip the RFPCA step.
    """
    if precomputed is None:
        basis, scores = rfpca.rfpca_fit(curves, d)
    else:
        basis, scores = precomputed
        if basis.rank != d:
            raise ValidationError("precomputed basis rank does not match d")
    return assemble_model(basis, scores, x, lam, opts=opts,
                          center_x=center_x, scale_x=scale_x)


def mode_extremes(model: FunctionalCCAModel, k: int, c: float):
    """Curves Exp_mu(+c psi_k) and Exp_mu(-c psi_k) for the k-th mode (1-based)."""
    if not 1 <= k <= model.K:
        raise ValidationError(f"mode index k={k} out of range 1..{model.K}")
    if c <= 0:
        raise ValidationError("mode amplitude c must be positive")
    psi = model.canonical_functions[k - 1]
    mu = model.basis.mean_curve
    plus = exp_curve(mu, TangentField(base=mu, values=c * psi.values))
    minus = exp_curve(mu, TangentField(base=mu, values=-c * psi.values))
    return plus, minus


def euclidean_fpca(curves, d: int):
    """Multivariate FPCA of vectorized curves (identity frame).

    Returns (mean, pis, omegas, scores): the pointwise mean in coefficient
    space (L, M), component functions (d, L, M), their variances, and the
    centered quadrature scores (N, d).
    """
    if len(curves) < 2:
        raise ValidationError("euclidean_fpca needs at least two curves")
    grid = curves[0].grid
    for c in curves[1:]:
        if not grid.matches(c.grid) or c.values.shape != curves[0].values.shape:
            raise ValidationError("curves do not share a grid and dimension")
    stack = np.stack([c.values for c in curves])
    vecs = rfpca.sym_to_coeffs(stack)  # (N, L, M)
    mean = vecs.mean(axis=0)
    pis, omegas = rfpca.mfpca(vecs, d, grid)
    centered = vecs - mean
    scores = np.einsum("nlk,jlk,l->nj", centered, pis, grid.weights)
    return mean, pis, omegas, scores


def fit_euclidean(curves, x, d: int, lam: float,
                  opts: SolverOptions | None = None,
                  center_x=True, scale_x=False,
                  precomputed=None) -> EuclideanFCCAModel:
    """Euclidean-variant fit: vectorized curves, multivariate FPCA, sparse CCA.

    Treats the SPD values as flat vectors (diagonal entries plus sqrt(2)
    times the off-diagonal ones, so the vector inner product matches the
    Frobenius one) and otherwise mirrors `fit`.
    """
    pre = precomputed if precomputed is not None else euclidean_fpca(curves, d)
    mean, pis, omegas, scores = pre
    xc, x_mean, x_scale = _prepare_x(x, scores.shape[0], center_x, scale_x)
    model = cca_mod.sparse_cca(scores, xc, lam, opts=opts, sigma_y=np.diag(omegas))
    psis = np.einsum("jk,jlm->klm", model.H, pis) if model.K else np.zeros((0,) + pis.shape[1:])
    return EuclideanFCCAModel(
        grid=curves[0].grid, mean=mean, components=pis, eigenvalues=omegas,
        cca=model, canonical_functions=psis, x_mean=x_mean, x_scale=x_scale,
    )


@dataclass(frozen=True)
class FitCVResult:
    d: int
    lam: float
    table: list            # rows (d, lambda, cv_error_mean, cv_error_sd)
    cv_correlations: dict  # d -> mean |held-out corr| per component
    model: FunctionalCCAModel


def fit_cv(curves, x, d_grid, lambda_grid=None, folds=5, seed=0,
           opts: SolverOptions | None = None, center_x=True, scale_x=False,
           scree_threshold=0.02, lambda_rule="min",
           n_lambdas=100, lambda_min_ratio=1e-3) -> FitCVResult:
    """Joint selection of the rank d and penalty lambda by cross-validation.

    For every d the penalty is chosen by K-fold CV of the regression error;
    held-out canonical correlations are then computed on the same folds and
    d is chosen by a scree rule on the summed squared cross-validated
    correlations: the smallest grid value whose relative gain over the
    previous one falls below `scree_threshold`, defaulting to the largest d
    when the gains never level off.  Grid entries beyond the effective rank
    of the tangent data are dropped with a warning.
    """
    d_grid = sorted(set(int(v) for v in np.atleast_1d(d_grid)))
    if not d_grid:
        raise ValidationError("d grid must be nonempty")
    if lambda_rule not in ("min", "1se"):
        raise ValidationError("lambda_rule must be 'min' or '1se'")
    basis_full, scores_full = rfpca.rfpca_fit(curves, max(d_grid), cap_rank=True)
    if basis_full.rank < max(d_grid):
        warnings.warn(
            f"tangent data has rank {basis_full.rank}; dropping larger d values"
        )
        d_grid = [d for d in d_grid if d <= basis_full.rank] or [basis_full.rank]
    xc, _, _ = _prepare_x(x, scores_full.shape[0], center_x, scale_x)
    n = xc.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    blocks = np.array_split(perm, folds)

    table = []
    chosen_lams = {}
    cv_corrs = {}
    for d in d_grid:
        omegas = basis_full.eigenvalues[:d]
        target = _whiten_scores(scores_full[:, :d], omegas)
        lams = (
            np.asarray(lambda_grid, dtype=float)
            if lambda_grid is not None
            else grouplasso.lambda_grid(grouplasso.lambda_max(xc, target),
                                        n_lambdas, lambda_min_ratio)
        )
        path = grouplasso.cv_path(xc, target, lams, folds=folds, seed=seed, opts=opts)
        for lam, mean_err, sd_err in zip(path.lambdas, path.mean_error, path.sd_error):
            table.append((d, float(lam), float(mean_err), float(sd_err)))
        lam_d = path.lambda_min if lambda_rule == "min" else path.lambda_1se
        chosen_lams[d] = lam_d
        cv_corrs[d] = _heldout_correlations(
            xc, scores_full[:, :d], omegas, lam_d, blocks, opts
        )

    # scree on the summed squared cross-validated correlations: every real
    # pair contributes, while noise-level correlations enter quadratically
    strength = {d: float(np.sum(np.square(cv_corrs[d]))) for d in d_grid}
    chosen_d = d_grid[-1]
    for prev, cur in zip(d_grid[:-1], d_grid[1:]):
        gain = (strength[cur] - strength[prev]) / max(strength[prev], 1e-12)
        if gain < scree_threshold:
            chosen_d = cur
            break
    model = fit(curves, x, chosen_d, chosen_lams[chosen_d], opts=opts,
                center_x=center_x, scale_x=scale_x,
                precomputed=(_truncate_basis(basis_full, chosen_d),
                             scores_full[:, :chosen_d]))
    return FitCVResult(
        d=chosen_d, lam=float(chosen_lams[chosen_d]), table=table,
        cv_correlations=cv_corrs, model=model,
    )


def _truncate_basis(basis: RFPCABasis, d: int) -> RFPCABasis:
    return RFPCABasis(
        mean_curve=basis.mean_curve,
        components=basis.components[:d],
        eigenvalues=basis.eigenvalues[:d],
    )


def _heldout_correlations(xc, scores, omegas, lam, blocks, opts):
    """Mean |held-out canonical correlation| per component across folds."""
    n = xc.shape[0]
    d = scores.shape[1]
    sums = np.zeros(d)
    for val_idx in blocks:
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        model = cca_mod.sparse_cca(
            scores[mask], xc[mask], lam, opts=opts, sigma_y=np.diag(omegas)
        )
        if model.K == 0:
            continue
        u = xc[val_idx] @ model.T
        v = scores[val_idx] @ model.H
        for k in range(model.K):
            su, sv = u[:, k].std(), v[:, k].std()
            if su > 0 and sv > 0:
                c = np.corrcoef(u[:, k], v[:, k])[0, 1]
                sums[k] += abs(c)
    return sums / len(blocks)
