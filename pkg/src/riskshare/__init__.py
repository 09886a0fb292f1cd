"""Pareto and Nash risk-sharing equilibria for mean-variance agents."""

from .core import (
    Agent,
    Market,
    ProbSpace,
    Rv,
    SecurityBasket,
    SingularCovarianceError,
    SpaceMismatchError,
    cov,
    cov_vector,
    demand,
    equal_up_to_constants,
    mean,
    mv_utility,
    var,
)
from .nash import (
    ConvergenceError,
    NashEndowmentOutcome,
    NashPercentageOutcome,
    NashPriceOutcome,
    excess_return_check,
    nash_endowment,
    nash_percentage,
    nash_price,
    nash_vs_pareto_utilities,
    table1_report,
)
from .pareto import (
    CapmEquilibrium,
    ParetoSharing,
    aggregate_gain,
    capm_equilibrium,
    constrained_loss,
    endowment_prices,
    optimal_sharing,
    optimal_utility_levels,
    reservation_prices,
    sharing_weights,
)
from .strategic import (
    DemandSchedule,
    best_demand_response,
    best_endowment_response,
    best_percentage_response,
    best_price_response,
    clearing_price,
    price_objective,
    reported_utility,
    truthful_schedules,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
