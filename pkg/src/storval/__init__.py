"""Forward contracts and the value of energy storage for a variable supplier.

The most used names are re-exported here; the submodules hold the rest.
"""

from __future__ import annotations

from .config import ConfigError, RunConfig, load_config
from .crossings import (
    crossing_stats,
    estimate_marginal_value_from_data,
    finite_difference_marginal_value,
    marginal_value,
    marginal_value_iid_closed_form,
    verify_lemma2,
)
from .market import AssumptionViolation, MarketPrices, expected_profit, path_profit, stage_cost
from .optimize import (
    optimal_contract_no_storage,
    optimal_value,
    optimize_contract,
    optimize_storage_size,
    supply_function,
)
from .storage import StorageType, simulate_policy, step, threshold_policy
from .wind_process import Beta, PiecewiseLinear, TruncatedNormal, Uniform, WindProcessSpec, quantile, sample_paths

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "Beta",
    "ConfigError",
    "MarketPrices",
    "PiecewiseLinear",
    "RunConfig",
    "StorageType",
    "TruncatedNormal",
    "Uniform",
    "WindProcessSpec",
    "crossing_stats",
    "estimate_marginal_value_from_data",
    "expected_profit",
    "finite_difference_marginal_value",
    "load_config",
    "marginal_value",
    "marginal_value_iid_closed_form",
    "optimal_contract_no_storage",
    "optimal_value",
    "optimize_contract",
    "optimize_storage_size",
    "path_profit",
    "quantile",
    "sample_paths",
    "simulate_policy",
    "stage_cost",
    "step",
    "supply_function",
    "threshold_policy",
    "verify_lemma2",
]
