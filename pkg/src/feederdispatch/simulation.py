"""Day-long playback: forecasts, coordination, tracking and statistics."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .admm import AdmmConfig, AdmmState, solve_coordination
from .core import BatteryModel, ErrorForecast, ScenarioTrace
from .tracker import SlotTracker

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    NO_DISPATCH = "no-dispatch"
    DISPATCH_ONLY = "dispatch-only"
    DISPATCH_ADMM = "dispatch-admm"


class Forecaster(str, enum.Enum):
    PERSISTENCE = "persistence"
    PERFECT = "perfect"
    TRACE = "trace"


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode
    trace: ScenarioTrace
    battery: BatteryModel
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    forecaster: Forecaster = Forecaster.PERSISTENCE

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "forecaster", Forecaster(self.forecaster))
        grid = self.trace.grid
        if self.battery.soc_min.size != grid.slots_per_day:
            raise ValueError(
                f"SOC bound profile has {self.battery.soc_min.size} slots, "
                f"expected {grid.slots_per_day}"
            )
        if self.battery.slot_seconds != grid.slot_seconds:
            raise ValueError("battery and trace disagree on the slot length")
        lo, hi = self.battery.soc_min[0], self.battery.soc_max[0]
        if not lo <= self.battery.soc <= hi:
            raise ValueError(
                f"initial SOC {self.battery.soc:.4f} outside the first slot's bounds [{lo}, {hi}]"
            )
        if self.forecaster is Forecaster.TRACE and self.trace.load_forecast_5min is None:
            raise ValueError("forecaster 'trace' needs a load forecast series")


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    p_disp_kw: float
    prosumption_kw: float
    gcp_kw: float
    tracking_error_kw: float
    battery_kw: float
    battery_plan_kw: float  # coordinator's advisory plan for the slot, charging positive
    pv_setpoint_kw: float
    pv_max_kw: float
    pv_kw: float
    soc_start_pct: float
    soc_end_pct: float
    soc_min_pct: float
    soc_max_pct: float
    soc_bound_distance_pct: float
    iterations: int
    accuracy_kw: float
    rho: float
    converged: int
    saturated_ticks: int


SLOT_COLUMNS = tuple(f.name for f in fields(SlotRecord))


@dataclass(frozen=True)
class TraceRow:
    slot: int
    k: int
    r_norm: float
    s_norm: float
    rho: float
    eps_pri: float
    eps_dual: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRow))


@dataclass
class DayResult:
    mode: Mode
    slots: list[SlotRecord]
    admm_trace: list[TraceRow]
    ticks: dict[str, np.ndarray]
    slot_hours: float
    # wall-clock per coordination call, kept out of every serialized output
    solve_seconds: list[float] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.slots], dtype=float)


@dataclass(frozen=True)
class SummaryStats:
    rmse_kw: float
    mean_error_kw: float
    max_abs_error_kw: float
    pv_energy_kwh: float
    curtailment_kwh: float
    max_soc_bound_distance_pct: float
    iterations_mean: float
    iterations_std: float
    iterations_max: float
    accuracy_mean_kw: float
    accuracy_std_kw: float
    accuracy_max_kw: float
    nonconverged_slots: int


SUMMARY_COLUMNS = tuple(f.name for f in fields(SummaryStats))


def build_error_forecast(plan, load_forecast, current_slot: int) -> ErrorForecast:
    """Injection the battery and PV must jointly supply over slots ``current_slot..``.

    ``load_forecast`` is the day-long slot forecast of prosumption (entries
    before ``current_slot`` are ignored).
    """
    plan = np.asarray(plan, dtype=float)
    load_forecast = np.asarray(load_forecast, dtype=float)
    if plan.shape != load_forecast.shape:
        raise ValueError("plan and load forecast must have the same length")
    if not 0 <= current_slot < plan.size:
        raise ValueError(f"current_slot {current_slot} outside [0, {plan.size})")
    return ErrorForecast(load_forecast[current_slot:] - plan[current_slot:])


def forecast_prosumption(trace: ScenarioTrace, forecaster: Forecaster, slot: int,
                         realized_avg: np.ndarray) -> np.ndarray:
    """Day-long prosumption forecast as seen at the start of ``slot``.

    ``realized_avg`` holds measured slot averages; only entries before
    ``slot`` are read.
    """
    forecaster = Forecaster(forecaster)
    if forecaster is Forecaster.PERFECT:
        return trace.slot_average(trace.load_10s)
    if forecaster is Forecaster.TRACE:
        return np.array(trace.load_forecast_5min)
    out = np.array(trace.p_disp)
    if slot > 0:
        out[slot:] = realized_avg[slot - 1]
    return out


def _pct(x: float) -> float:
    return 100.0 * x


def run_day(cfg: ScenarioConfig, keep_ticks: bool = True) -> DayResult:
    trace, grid = cfg.trace, cfg.trace.grid
    n_slots, per = grid.slots_per_day, grid.ticks_per_slot
    load_avg = trace.slot_average(trace.load_10s)
    battery = cfg.battery
    soc = battery.soc
    warm: AdmmState | None = None
    realized = np.zeros(n_slots)
    records: list[SlotRecord] = []
    trace_rows: list[TraceRow] = []
    solve_seconds: list[float] = []
    tick_cols = ("prosumption_kw", "pv_kw", "battery_kw", "gcp_kw", "soc")
    ticks = {k: np.zeros(grid.ticks_per_day) for k in tick_cols} if keep_ticks else {}

    for i in range(n_slots):
        g_max = float(trace.pv_gmax_5min[i])
        plan_i = float(trace.p_disp[i])
        iterations, accuracy, rho, converged = 0, float("nan"), float("nan"), 1
        b_plan = float("nan")
        pv_cap = np.inf
        setpoint = g_max

        if cfg.mode is Mode.DISPATCH_ADMM:
            fc = forecast_prosumption(trace, cfg.forecaster, i, realized)
            e_hat = build_error_forecast(trace.p_disp, fc, i)
            t0 = time.perf_counter()
            res = solve_coordination(e_hat, trace.pv_gmax_5min[i:], battery.with_soc(soc),
                                     cfg.admm, warm)
            solve_seconds.append(time.perf_counter() - t0)
            warm = res.state.shifted()
            if warm is not None and not res.converged:
                # a run that hit max_iter may carry a runaway penalty
                warm = warm.with_rho(cfg.admm.rho0)
            setpoint = pv_cap = res.g_setpoint
            iterations, accuracy, rho = res.iterations, res.accuracy, res.rho
            converged = int(res.converged)
            b_plan = -float(res.b_plan[0])
            trace_rows.extend(
                TraceRow(i, t.k, t.r_norm, t.s_norm, t.rho, t.eps_pri, t.eps_dual) for t in res.trace
            )

        tracker = SlotTracker(plan_i, battery.with_soc(soc), slot=i, grid=grid,
                              enabled=cfg.mode is not Mode.NO_DISPATCH)
        sl = slice(i * per, (i + 1) * per)
        for load, mpp in zip(trace.load_10s[sl], trace.pv_mpp_10s[sl]):
            tracker.tick(float(load), float(min(pv_cap, mpp)))
        rep = tracker.slot_close()
        # read back the SOC the battery reports at the end of the slot
        soc = rep.soc_end
        realized[i] = load_avg[i]
        if keep_ticks:
            for k in tick_cols:
                ticks[k][sl] = getattr(rep.ticks, k)

        records.append(SlotRecord(
            slot=i,
            p_disp_kw=plan_i,
            prosumption_kw=float(load_avg[i]),
            gcp_kw=rep.gcp_avg_kw,
            tracking_error_kw=rep.tracking_error_kw,
            battery_kw=rep.battery_avg_kw,
            battery_plan_kw=b_plan,
            pv_setpoint_kw=setpoint,
            pv_max_kw=g_max,
            pv_kw=rep.pv_avg_kw,
            soc_start_pct=_pct(rep.soc_start),
            soc_end_pct=_pct(rep.soc_end),
            soc_min_pct=_pct(battery.soc_min[i]),
            soc_max_pct=_pct(battery.soc_max[i]),
            soc_bound_distance_pct=_pct(rep.soc_bound_distance),
            iterations=iterations,
            accuracy_kw=accuracy,
            rho=rho,
            converged=converged,
            saturated_ticks=rep.saturated_ticks,
        ))

    if cfg.mode is Mode.DISPATCH_ADMM:
        bad = sum(1 for r in records if not r.converged)
        if bad:
            log.warning("%d of %d coordination calls hit max_iter", bad, n_slots)
    return DayResult(cfg.mode, records, trace_rows, ticks, grid.slot_hours, solve_seconds)


def _stats(x: np.ndarray) -> tuple[float, float, float]:
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan"), float("nan")
    return float(np.mean(x)), float(np.std(x)), float(np.max(x))


def summarize_columns(cols: dict[str, np.ndarray], slot_hours: float = 300.0 / 3600.0) -> SummaryStats:
    """Statistics from per-slot columns, as found in a result or in slots.csv."""
    e = np.asarray(cols["tracking_error_kw"], dtype=float)
    if e.size == 0:
        raise ValueError("no slots to summarize")
    curtailed = np.maximum(np.asarray(cols["pv_max_kw"]) - np.asarray(cols["pv_setpoint_kw"]), 0.0)
    admm_used = np.asarray(cols["iterations"], dtype=float) > 0
    it = np.where(admm_used, cols["iterations"], np.nan)
    acc = np.where(admm_used, cols["accuracy_kw"], np.nan)
    it_stats = _stats(it)
    acc_stats = _stats(acc)
    return SummaryStats(
        rmse_kw=float(np.sqrt(np.mean(e ** 2))),
        mean_error_kw=float(np.mean(e)),
        max_abs_error_kw=float(np.max(np.abs(e))),
        pv_energy_kwh=float(np.sum(cols["pv_kw"]) * slot_hours),
        curtailment_kwh=float(np.sum(curtailed) * slot_hours),
        max_soc_bound_distance_pct=float(np.max(cols["soc_bound_distance_pct"])),
        iterations_mean=it_stats[0],
        iterations_std=it_stats[1],
        iterations_max=it_stats[2],
        accuracy_mean_kw=acc_stats[0],
        accuracy_std_kw=acc_stats[1],
        accuracy_max_kw=acc_stats[2],
        nonconverged_slots=int(np.sum(np.asarray(cols["converged"]) == 0)),
    )


def summarize(result: DayResult) -> SummaryStats:
    return summarize_columns({c: result.column(c) for c in SLOT_COLUMNS}, result.slot_hours)
