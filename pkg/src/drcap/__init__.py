"""Joint capacity planning and demand-response design under uncertainty."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiment import annualize, emit_results, run_experiment
from .flex import FlexParams, select_violations, simulate_lin_plus, sweep_rho
from .lin import (
    DualPrices,
    LinearContract,
    customer_subproblem,
    lse_subproblem,
    negotiate,
    simulate_lin,
    solve_lin_centralized,
)
from .model import (
    CustomerCost,
    DispatchResult,
    InvalidModelError,
    LseCost,
    dispatch_capped,
    dispatch_convex,
    dispatch_unconstrained,
    kappa_subgradient,
    kkt_residuals,
)
from .planner import CapacityPlan, solve_opt, solve_seq
from .pred import PriceRule, estimated_response, price_rule, simulate_pred, solve_pred
from .scenarios import (
    DataError,
    ScenarioSet,
    Trace,
    assemble_scenarios,
    bootstrap_customers,
    build_prediction_errors,
    sample_cost_coeffs,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityPlan",
    "ConfigError",
    "CustomerCost",
    "DataError",
    "DispatchResult",
    "DualPrices",
    "ExperimentConfig",
    "FlexParams",
    "InvalidModelError",
    "LinearContract",
    "LseCost",
    "PriceRule",
    "ScenarioSet",
    "Trace",
    "annualize",
    "assemble_scenarios",
    "bootstrap_customers",
    "build_prediction_errors",
    "customer_subproblem",
    "dispatch_capped",
    "dispatch_convex",
    "dispatch_unconstrained",
    "emit_results",
    "estimated_response",
    "kappa_subgradient",
    "kkt_residuals",
    "load_config",
    "lse_subproblem",
    "negotiate",
    "parse_config",
    "price_rule",
    "run_experiment",
    "sample_cost_coeffs",
    "select_violations",
    "simulate_lin",
    "simulate_lin_plus",
    "simulate_pred",
    "solve_lin_centralized",
    "solve_opt",
    "solve_pred",
    "solve_seq",
    "sweep_rho",
]
