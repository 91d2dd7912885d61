"""Beta AR(p) compositional time series: simulation, fitting, and
nonparametric sequential change-point monitoring."""

from .cpstats import (
    CovKernel,
    DetectorVector,
    QuantileGrid,
    centered_partial_sum,
    detector,
    detector_path,
    ecdf,
    identity_over_d,
    inverse_spd,
    long_run_covariance,
    make_quantile_grid,
    quad_stat,
    weight,
)
from .fitting import (
    DetrendModel,
    FitResult,
    SweepResult,
    detrend,
    fit,
    fitted_means,
    hessian_standard_errors,
    model_selection_sweep,
    negative_loglik,
    negative_loglik_gradient,
    select_min_aic,
)
from .model import (
    ArmaSpec,
    BetaARX,
    SeriesPair,
    clamp,
    clamped_logit,
    inverse_logit,
    logit,
    simulate_exogenous,
    simulate_outputs,
    simulate_series,
)
from .monitor import (
    DetectionReport,
    MonitorConfig,
    MonitorPlan,
    MonitorState,
    build_plan,
    calibrate,
    load_plan,
    new_state,
    run_to_completion,
    save_plan,
    step,
)
from .threshold import (
    ThresholdRequest,
    ThresholdTable,
    simulate_gaussian_paths,
    simulate_sup_stat,
    threshold_table,
)

__version__ = "0.1.0"
