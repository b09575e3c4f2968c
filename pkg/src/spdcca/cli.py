"""Command line interface: simulate, fit, cv, evaluate, and mode reports.

Report-producing commands write delimited output and render a matplotlib
figure next to it (same path with a .png suffix).  Exit codes: 0 on success,
1 on input validation failures, 2 on numeric failures.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import dataio, pipeline, simgen, viz
from .errors import NumericError, ValidationError
from .fields import TangentField
from .rfpca import sym_to_coeffs

LAMBDA_HELP = (
    "Group-lasso penalty for the loss (2/N)||M - XB||_F^2 + lambda sum_i ||b_i||_2. "
    "Solvers using the (1/(2N))||.||^2 convention need lambda_std = lambda / 4."
)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except (NumericError, np.linalg.LinAlgError) as exc:
            click.echo(f"numeric error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _load_dataset(curves_path, covariates_path):
    ids, curves = dataio.load_curves(curves_path)
    cov_ids, x = dataio.load_covariates(covariates_path)
    x = dataio.align_covariates(ids, cov_ids, x)
    return ids, curves, x


def _parse_float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as a comma-separated float list")


def _parse_int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as a comma-separated integer list")


@click.group()
@click.version_option()
def main():
    """Sparse asymmetric CCA between SPD-valued curves and high-dimensional vectors."""


@main.command()
@click.option("--n", "n", type=int, default=200, show_default=True,
              help="Number of subjects to simulate.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--p", type=int, default=200, show_default=True,
              help="Dimension of the covariate vector.")
@click.option("--k1", type=int, default=20, show_default=True,
              help="Size of the shared support of the planted canonical vectors.")
@click.option("--outdir", type=click.Path(file_okay=False), default=".",
              show_default=True)
@_handle_errors
def simulate(n, seed, p, k1, outdir):
    """Draw a synthetic dataset and write curves, covariates, and the truth."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = simgen.SimConfig(p=p, k1=k1, N=n, seed=seed)
    truth = simgen.make_truth(cfg)
    y, x = simgen.sample_multivariate(truth, n, seed + 1)
    curves = simgen.synthesize_curves(truth, y, seed + 2)
    ids = [f"s{i + 1:04d}" for i in range(n)]
    dataio.write_curves(out / "curves.csv", ids, curves)
    dataio.write_covariates(out / "covariates.csv", ids, x)
    dataio.save_truth(truth, out / "truth.json")
    click.echo(f"wrote {out / 'curves.csv'}, {out / 'covariates.csv'}, {out / 'truth.json'}")


def _fit_options(fn):
    fn = click.option("--curves", "curves_path", required=True,
                      type=click.Path(exists=True, dir_okay=False))(fn)
    fn = click.option("--covariates", "covariates_path", required=True,
                      type=click.Path(exists=True, dir_okay=False))(fn)
    fn = click.option("--center-x/--no-center-x", default=True, show_default=True,
                      help="Remove covariate column means before fitting.")(fn)
    fn = click.option("--scale-x/--no-scale-x", default=False, show_default=True,
                      help="Standardize covariate columns before fitting.")(fn)
    return fn


@main.command()
@_fit_options
@click.option("--rank", "-d", type=int, required=True,
              help="Number of functional principal components.")
@click.option("--lambda", "lam", type=float, required=True, help=LAMBDA_HELP)
@click.option("--method", type=click.Choice(["riemannian", "euclidean"]),
              default="riemannian", show_default=True)
@click.option("--seed", type=int, default=None, help="Recorded in the artifact.")
@click.option("--output", type=click.Path(dir_okay=False), default="model.json",
              show_default=True)
@_handle_errors
def fit(curves_path, covariates_path, center_x, scale_x, rank, lam, method,
        seed, output):
    """Fit the sparse functional CCA model and write a model artifact."""
    ids, curves, x = _load_dataset(curves_path, covariates_path)
    fit_fn = pipeline.fit if method == "riemannian" else pipeline.fit_euclidean
    model = fit_fn(curves, x, rank, lam, center_x=center_x, scale_x=scale_x)
    config = {"command": "fit", "method": method, "rank": rank, "lambda": lam,
              "center_x": center_x, "scale_x": scale_x}
    dataio.save_model(model, output, seed=seed, config=config)
    click.echo(f"K={model.cca.K} canonical pairs")
    for k, corr in enumerate(model.cca.correlations):
        click.echo(f"  pair {k + 1}: correlation {corr:.6f}")
    support = np.nonzero(np.linalg.norm(model.cca.T, axis=1) > 1e-10)[0]
    click.echo(f"selected support: {support.size} covariates "
               f"{[int(i) + 1 for i in support[:12]]}{'...' if support.size > 12 else ''}")
    click.echo(f"wrote {output}")


@main.command()
@_fit_options
@click.option("--rank", "-d", "rank_arg", type=str, required=True,
              help="Comma-separated candidate ranks, e.g. 2,3,4.")
@click.option("--lambda-grid", "lambda_grid_arg", type=str, default=None,
              help="Comma-separated penalty grid; default is 100 log-spaced "
                   "values from lambda_max down to 1e-3 lambda_max.")
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda-rule", type=click.Choice(["min", "1se"]), default="min",
              show_default=True, help="Pick the CV-minimizing penalty or the 1-SE one.")
@click.option("--output", type=click.Path(dir_okay=False), default="model.json",
              show_default=True)
@click.option("--table", "table_path", type=click.Path(dir_okay=False),
              default="cv_table.csv", show_default=True)
@_handle_errors
def cv(curves_path, covariates_path, center_x, scale_x, rank_arg,
       lambda_grid_arg, folds, seed, lambda_rule, output, table_path):
    """Cross-validate (d, lambda), write the CV table, scree data, and model."""
    ids, curves, x = _load_dataset(curves_path, covariates_path)
    d_grid = _parse_int_list(rank_arg)
    lams = None
    if lambda_grid_arg is not None:
        lams = np.asarray(sorted(_parse_float_list(lambda_grid_arg), reverse=True))
    res = pipeline.fit_cv(curves, x, d_grid, lambda_grid=lams, folds=folds,
                          seed=seed, center_x=center_x, scale_x=scale_x,
                          lambda_rule=lambda_rule)
    dataio.write_table(table_path, ("d", "lambda", "cv_error_mean", "cv_error_sd"),
                       res.table)
    table = Path(table_path)
    corr_path = table.with_name(table.stem + "_correlations.csv")
    corr_rows = [
        (d, k + 1, float(v))
        for d in sorted(res.cv_correlations)
        for k, v in enumerate(res.cv_correlations[d])
    ]
    dataio.write_table(corr_path, ("d", "pair", "cv_correlation"), corr_rows)
    viz.plot_cv_table(res.table, table.with_suffix(".png"))
    viz.plot_cv_correlations(res.cv_correlations,
                             corr_path.with_suffix(".png"))
    config = {"command": "cv", "d_grid": d_grid, "folds": folds, "seed": seed,
              "lambda_rule": lambda_rule, "center_x": center_x, "scale_x": scale_x}
    dataio.save_model(res.model, output, seed=seed, config=config)
    click.echo(f"chosen d={res.d}, lambda={res.lam:.6g}")
    click.echo(f"wrote {table_path}, {corr_path}, {output} and figures")


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--test-curves", "test_curves_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--test-covariates", "test_covariates_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Path(dir_okay=False), default="metrics.csv",
              show_default=True)
@_handle_errors
def evaluate(model_path, truth_path, test_curves_path, test_covariates_path,
             output):
    """Score a fitted model against the simulation truth (first pair metrics)."""
    model = dataio.load_model(model_path)
    truth = dataio.load_truth(truth_path)
    if (test_curves_path is None) != (test_covariates_path is None):
        raise ValidationError("--test-curves and --test-covariates go together")
    test = None
    if test_curves_path is not None:
        _, test_curves, test_x = _load_dataset(test_curves_path, test_covariates_path)
        test = (test_curves, test_x)
    metrics = _evaluate_model(model, truth, test)
    dataio.write_table(output, ("metric", "value"),
                       [(name, float(value)) for name, value in metrics.items()])
    viz.plot_metrics(metrics, Path(output).with_suffix(".png"))
    for name, value in metrics.items():
        click.echo(f"{name}: {value:.6f}")
    click.echo(f"wrote {output}")


def _evaluate_model(model, truth, test):
    if model.cca.K == 0:
        raise NumericError("model has no canonical pairs to evaluate")
    # canonical vector in original covariate coordinates (undo any scaling)
    theta = model.cca.T[:, 0] / model.x_scale
    if isinstance(model, pipeline.EuclideanFCCAModel):
        # flat-space model solves a different population problem; only the
        # Euclidean test correlation is comparable
        if test is None:
            raise ValidationError(
                "euclidean artifacts are scored by metric E only; pass "
                "--test-curves and --test-covariates"
            )
        return {"E": simgen.metric_euclid_corr(
            test[0], test[1], model.canonical_functions[0], theta, model.grid)}
    psi_true = truth.canonical_function(0)
    sign = simgen.resolve_sign(psi_true, model.canonical_functions[0])
    theta = sign * theta
    psi_hat = model.canonical_functions[0]
    if sign < 0:
        psi_hat = TangentField(base=model.basis.mean_curve, values=-psi_hat.values)
    metrics = {
        "A": simgen.metric_norm_error(truth.thetas[:, 0], theta),
        "B": simgen.metric_f1(truth.support, theta),
        "C": simgen.metric_pt_error(psi_true, psi_hat),
    }
    if test is not None:
        metrics["D"] = simgen.metric_tangent_corr(
            test[0], test[1], psi_hat, theta, mu_true=truth.mu)
        metrics["E"] = simgen.metric_euclid_corr(
            test[0], test[1], sym_to_coeffs(psi_hat.values), theta, psi_hat.grid)
    return metrics


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("-k", type=int, default=1, show_default=True,
              help="Canonical pair index (1-based).")
@click.option("-c", type=float, default=1.0, show_default=True,
              help="Amplitude of the mode excursion.")
@click.option("--output", type=click.Path(dir_okay=False), default="modes.csv",
              show_default=True)
@_handle_errors
def mode(model_path, k, c, output):
    """Write the mean curve and both extremes of a fitted mode as CSV."""
    model = dataio.load_model(model_path)
    if not isinstance(model, pipeline.FunctionalCCAModel):
        raise ValidationError("mode extremes need a riemannian model artifact")
    plus, minus = pipeline.mode_extremes(model, k, c)
    mu = model.basis.mean_curve
    m = mu.dim
    header = ["curve", "t"] + [f"c{i + 1}{j + 1}" for i in range(m) for j in range(i, m)]
    rows = []
    for label, curve in (("mean", mu), ("plus", plus), ("minus", minus)):
        for l, t in enumerate(curve.grid.points):
            rows.append([label, float(t)] + [
                float(curve.values[l, i, j]) for i in range(m) for j in range(i, m)
            ])
    dataio.write_table(output, header, rows)
    viz.plot_mode(mu.grid.points, mu.values, plus.values, minus.values,
                  Path(output).with_suffix(".png"))
    click.echo(f"wrote {output} and figure")


if __name__ == "__main__":
    main()
