"""Numerical laboratory for worst-group error of group-adjusted losses
on Gaussian mixtures with spurious features."""

from .model_core import (
    Classifier,
    ProbabilisticMode,
    ProblemSpec,
    Sample,
    build_nu,
    group_of,
    snr_summary,
)
from .data_gen import (
    Dataset,
    RngStream,
    flip_labels,
    sample_dataset,
    sample_test_point,
    split_counts,
)
from .losses import (
    EXPONENTIAL,
    LOGISTIC,
    GradSummary,
    VsLossParams,
    grad_summary,
    neg_derivative,
    neutral,
    tune_la,
    tune_vs_defaults,
)
from .gd_trainer import GdConfig, Trajectory, auto_step_size, gd_step, run_gd
from .cs_svm import SvmSolution, min_norm_interpolator, scaled_margins, solve_cs_svm
from .risk import (
    ErrorReport,
    eval_benign_bound,
    eval_la_lower_bound,
    eval_vs_upper_bound,
    monte_carlo_error,
    q_function,
    worst_group_error,
)
from .diagnostics import (
    DiagnosticsConfig,
    assumption_check,
    good_event_check,
    margin_equality_check,
    ratio_monitor,
    separability_witness,
)
from .experiments import SweepGrid, fig2_preset, run_sweep

__version__ = "0.1.0"
