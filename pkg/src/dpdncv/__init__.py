"""Robust sparse linear regression with a density power divergence loss and
folded-concave penalties, plus influence diagnostics, information-criterion
tuning and a seeded simulation harness."""

from .errors import ErrorModel, ModelMoments, NormalErrorModel, j_terms, model_moments, psi1, psi2
from .estimator import DPDRegressor
from .influence import (
    ContaminationPoint,
    GridSpec,
    IfResult,
    SmoothedPenalty,
    asymptotic_covariance,
    if_normal_sigma_closed_form,
    if_smooth,
    if_sparse,
    sensitivity_scan,
)
from .model import ActiveSet, Dataset, DpdConfig, ModelParams, residuals
from .objective import (
    ObjectiveContext,
    SigmaBlocks,
    bordered_matrix,
    dpd_loss,
    gradient,
    penalized_objective,
    sigma_matrix,
    sigma_star_matrix,
)
from .penalties import L1Penalty, McpPenalty, Penalty, ScadPenalty, make_penalty
from .simulate import (
    ExperimentResult,
    MethodConfig,
    MetricRow,
    SimSpec,
    contaminate,
    gen_beta,
    gen_design,
    gen_response,
    metrics,
    run_experiment,
)
from .solver import (
    DegenerateScaleError,
    FitResult,
    KktReport,
    OracleResult,
    SolverConfig,
    beta_step,
    fit,
    initializer,
    kkt_check,
    lambda_zero_max,
    oracle_minimize,
    sigma_step,
    solve_sigma,
    weights,
)
from .tuning import TuningGrid, TuningResult, alpha_sweep, default_lambda_grid, hbic, hbic_value, lambda_path

__version__ = "0.1.0"
