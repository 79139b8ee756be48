"""Bayesian compressed regression.

Regress on a random low-dimensional linear image of the predictors instead
of on the predictors themselves: draw sparse row-orthonormal projections,
compute the exact conjugate posterior on each compressed space, and average
the Student-t predictives with posterior model weights.
"""

from .conjugate import (
    CompressedPosterior,
    PriorSpec,
    StudentT,
    fit_posterior,
    log_gamma,
    log_marginal,
    predictive,
    predictive_batch,
    student_t_cdf,
    student_t_logpdf,
)
from .data import (
    Dataset,
    StandardizationStats,
    apply_transform,
    invert_transform,
    load_csv,
    load_features_csv,
    standardize,
    transform_rows,
)
from .ensemble import (
    Ensemble,
    EnsembleConfig,
    EnsembleMember,
    fit_ensemble,
    gamma_mean,
    load_ensemble,
    member_plan,
    normalize_log_weights,
    predict_mean,
    predict_mean_batch,
    predictive_interval,
    predictive_intervals_batch,
    predictive_log_density,
    resolve_window,
    save_ensemble,
)
from .projection import (
    ProjectionMatrix,
    ProjectionSpec,
    compress,
    draw_projection,
    draw_raw_entries,
)
from .simbench import (
    MetricsReport,
    RidgeResult,
    Scenario,
    bootstrap_se,
    coverage_rate,
    gen_design,
    gen_response,
    mspe,
    ridge_fit_predict,
    run_replicates,
    scenario,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
