"""Decision-focused PV forecasting for residential battery scheduling."""

from ._backend import backend_name
from .domain import (
    BatterySpec,
    Building,
    DayInstance,
    HourlySeries,
    Schedule,
    Unit,
    validate_day_instance,
)
from .sched_opt import (
    SolveOptions,
    StandardFormLP,
    build_problem,
    evaluate_fixed_schedule,
    no_opt_cost,
    solve_day,
)
from .diffopt import KktFactorization, regret_and_gradient, solve_with_sensitivities

__version__ = "0.1.0"

__all__ = [
    "BatterySpec",
    "Building",
    "DayInstance",
    "HourlySeries",
    "KktFactorization",
    "Schedule",
    "SolveOptions",
    "StandardFormLP",
    "Unit",
    "backend_name",
    "build_problem",
    "evaluate_fixed_schedule",
    "no_opt_cost",
    "regret_and_gradient",
    "solve_day",
    "solve_with_sensitivities",
    "validate_day_instance",
]
