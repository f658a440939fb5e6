"""Count never takers, defiers, compliers and always takers from grouped IV data."""

__version__ = "0.1.0"

from .baseline import BaselineShares, first_stage, monotonicity_shares  # noqa: E402
from .bootstrap import BootstrapReport, bootstrap_se, resample  # noqa: E402
from .estimators import EstimatorConfig, EstimatorKind, run_estimator  # noqa: E402
from .least_squares import (  # noqa: E402
    LsSolution,
    enumerate_subsets,
    ls_estimate,
    ls_estimate_free_p,
    objective_S,
    randomization_error,
)
from .mle import MleResult, mle_exact, mle_heuristic, mle_profile_p  # noqa: E402
from .model import (  # noqa: E402
    CountMatrix,
    DesignParams,
    GroupedData,
    PMode,
    TypeVector,
    enumerate_distribution,
    feasible_ell_range,
    log_binom_pmf,
    log_data_probability,
)
from .simulator import SimConfig, simulate_grouped, simulate_once  # noqa: E402

__all__ = [
    "BaselineShares",
    "BootstrapReport",
    "CountMatrix",
    "DesignParams",
    "EstimatorConfig",
    "EstimatorKind",
    "GroupedData",
    "LsSolution",
    "MleResult",
    "PMode",
    "SimConfig",
    "TypeVector",
    "bootstrap_se",
    "enumerate_distribution",
    "enumerate_subsets",
    "feasible_ell_range",
    "first_stage",
    "log_binom_pmf",
    "log_data_probability",
    "ls_estimate",
    "ls_estimate_free_p",
    "mle_exact",
    "mle_heuristic",
    "mle_profile_p",
    "monotonicity_shares",
    "objective_S",
    "randomization_error",
    "resample",
    "run_estimator",
    "simulate_grouped",
    "simulate_once",
]
