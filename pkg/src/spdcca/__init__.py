"""Sparse asymmetric CCA between SPD-valued curves and high-dimensional vectors."""

from .cca import CCAModel, classical_cca, inv_sqrt_psd, sparse_cca
from .errors import ConvergenceError, NumericError, ValidationError
from .fields import (SPDCurve, TangentField, TimeGrid, exp_curve, field_inner,
                     field_norm, log_curve, transport_field)
from .geometry import (frechet_mean, parallel_transport, riem_dist, riem_exp,
                       riem_inner, riem_log)
from .grouplasso import (CVPathResult, SolverOptions, cv_path, kkt_residual,
                         lambda_grid, lambda_max, objective, solve)
from .pipeline import (EuclideanFCCAModel, FitCVResult, FunctionalCCAModel,
                       euclidean_fpca, fit, fit_cv, fit_euclidean, mode_extremes)
from .rfpca import RFPCABasis, coefficients, frame_at, frechet_mean_curve, mfpca, rfpca_fit
from .simgen import (SimConfig, SimTruth, make_truth, metric_euclid_corr,
                     metric_f1, metric_norm_error, metric_pt_error,
                     metric_tangent_corr, resolve_sign, run_trials,
                     sample_multivariate, synthesize_curves)

__version__ = "0.1.0"
