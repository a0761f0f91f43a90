"""Robust linear regression with the Welsch loss.

The main entry point is :func:`fit_two_stage`: a LAD warm start followed by
minimization of the Welsch objective. Comparator M-estimators, landscape
diagnostics, a contaminated-data simulator and median cross-validation are
exported alongside.
"""
from ._version import __version__
from .dataset import Dataset
from .diagnostics import (
    BasinParams, TruthMeta, augmented_outlier_count, augmented_outlier_set, ball_membership,
    basin_indicator_fraction, d_condition, deviation_bound, hessian_min_eigenvalue, in_basin,
    theoretical_tau, welsch_hessian,
)
from .errors import (
    ConfigError, DataFileError, DegenerateDataError, DomainError, LineSearchError,
    NumericalError, OptimizationError, SelectionError, SingularityError, WelschRegError,
)
from .estimators import (
    FitConfig, FitResult, estimate_scale, fit_lad, fit_m_estimator, fit_ols, fit_two_stage,
    fit_welsch, run_stage1, solve_check_loss, welsch_objective,
)
from .experiments import (
    EstimatorSpec, ExperimentReport, ExperimentSpec, PRESETS, bias_curve,
    convergence_trace_experiment, estimator, mse_distribution, normality_experiment, preset,
    rate_experiment, run_replicates,
)
from .io import load_csv, read_table, write_report, write_table
from .losses import LossSpec, curvature, psi, rho, weight
from .model_selection import CvSpec, default_grid, median_cv, train_test_split
from .optim import OptimizerConfig, OptimTrace, finite_diff_gradient, minimize, wolfe_line_search
from .simulation import ContaminationSpec, NoiseSpec, generate_dataset, mix_seed

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
