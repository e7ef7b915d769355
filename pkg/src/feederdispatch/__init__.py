"""Two-layer battery/PV dispatch of a feeder's grid connection point.

A 5-minute consensus ADMM decides the PV set-point from a shrinking-horizon
plan, and a 10-second loop drives the battery so that each slot's average
GCP power meets the dispatch plan.
"""

from .admm import (
    AdmmConfig, AdmmState, CoordinationResult, adapt_rho, residuals, solve_coordination,
    stopping_tolerances,
)
from .core import (
    BatteryModel, ErrorForecast, PvForecast, ScenarioTrace, TimeGrid, soc_step, soc_trajectory,
)
from .simulation import (
    DayResult, Forecaster, Mode, ScenarioConfig, SummaryStats, build_error_forecast, run_day,
    summarize,
)
from .subproblems import BoxChainQp, InfeasibleSet, bess_update, consensus_update, pv_update
from .tracker import SlotReport, SlotTracker

__all__ = [
    "AdmmConfig", "AdmmState", "BatteryModel", "BoxChainQp", "CoordinationResult", "DayResult",
    "ErrorForecast", "Forecaster", "InfeasibleSet", "Mode", "PvForecast", "ScenarioConfig",
    "ScenarioTrace", "SlotReport", "SlotTracker", "SummaryStats", "TimeGrid", "adapt_rho",
    "bess_update", "build_error_forecast", "consensus_update", "pv_update", "residuals",
    "run_day", "soc_step", "soc_trajectory", "solve_coordination", "stopping_tolerances",
    "summarize",
]
