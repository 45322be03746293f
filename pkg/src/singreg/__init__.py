"""Numerical laboratory for Gibbs-posterior regression.

Simulates posterior inference on regular and singular regression models,
estimates generalization and training errors, the functional variance, and
the corrected generalization estimate, and recovers the model's birational
invariants (volume-scaling exponent and variance invariant) three independent
ways: exact chart arithmetic, prior volume fits, and error-limit inversion.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .birational import (
    Chart,
    ChartSet,
    InvariantEstimate,
    VolumeProfile,
    default_t_grid,
    invariants_from_errors,
    linear_reference_charts,
    nu_from_v,
    rlct_from_charts,
    rlct_volume_fit,
    volume_profile,
)
from .datagen import Dataset, generate, load_dataset, save_dataset
from .errors import ConfigError, FitError, SchemaError, SingregError, ValidationError
from .estimators import (
    REPORT_COLUMNS,
    DStatistics,
    ErrorReport,
    PredictiveMoments,
    compute_error_report,
    d_statistics,
    functional_variance,
    generalization_error,
    predictive_moments,
    report_from_row,
    report_to_row,
    stein_diagnostic,
    training_error,
    waic_estimate,
)
from .harness import (
    CellStats,
    CheckResult,
    ExperimentConfig,
    PriorVolumeConfig,
    SweepResult,
    aggregate,
    evaluate_checks,
    experiment_xq,
    load_config,
    load_raw,
    load_summary,
    plot_rows,
    report_text,
    run_replication,
    run_sweep,
    save_config,
)
from .models import (
    ModelInfo,
    ModelSpec,
    ParameterRegion,
    PriorSpec,
    TrueProcess,
    XQuadrature,
    available_models,
    empirical_square_error,
    empirical_square_error_many,
    make_model,
    make_truth,
    model_info,
    population_k,
    population_k_many,
)
from .posterior import (
    Diagnostics,
    GibbsTarget,
    GridConfig,
    McmcConfig,
    PosteriorSamples,
    PtConfig,
    dump_draws_csv,
    effective_sample_size,
    expectation,
    grid_posterior,
    quadrature_expectation,
    sample_posterior,
    split_rhat,
)
from .seeds import PURPOSE_DATA, PURPOSE_MCMC, PURPOSE_PRIOR_VOLUME, PURPOSE_XQUAD, mix

__all__ = [name for name in dir() if not name.startswith("_")]
