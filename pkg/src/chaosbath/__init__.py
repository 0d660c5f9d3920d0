"""Weakly coupled chaotic ensembles: simulation, reduction, response testing."""

from .micro import (
    MicroEnsemble,
    MicroUnit,
    ObservableKind,
    ParameterEscapeError,
    SystemSpec,
    Trajectory,
    centred_moments,
    cocycle_trajectory,
    coupling_term,
    draw_params,
    empirical_density,
    eval_observable,
    simulate,
    step_macro,
    step_micro_unit,
)
from .params import (
    ConfigurationError,
    PerturbationSpec,
    RaisedCosineLaw,
    SmoothnessOrder,
    load_params_csv,
    perturbed_param,
    save_params_csv,
)
from .reduction import (
    EtaRealization,
    FactorizationError,
    GridCoverageError,
    LagCovariance,
    MACoefficients,
    average_over_law,
    cocycle_lag_from_logistic,
    eta_covariance_quadrature,
    lag_covariance,
    mean_over_law,
    reconstruct_covariance,
    sample_eta,
    sample_zeta,
    save_ma_csv,
    simulate_deterministic_limit,
    simulate_finite_size,
    simulate_stochastic_limit,
    spectral_factorize,
)
from .response import (
    FitResult,
    InsufficientDataError,
    ResponseDataset,
    ResponseExperiment,
    ResponseResult,
    TestResult,
    batch_means_variance,
    breakdown_parameter,
    build_design,
    chi2_statistic,
    green_kubo_variance,
    make_null_dataset,
    null_calibration,
    p_value,
    run_response_experiment,
    sample_mean,
    threshold,
    wls_fit,
)
from .table import (
    Classification,
    LogisticStats,
    ReductionTable,
    build_reduction_table,
    classify_parameter,
    default_grid,
    load_table,
    logistic_stats_mc,
    logistic_stats_regular,
    save_table,
)

__version__ = "0.1.0"
