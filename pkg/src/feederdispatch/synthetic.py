"""Seeded synthetic reference day.

Office feeder with rooftop PV as uncontrollable prosumption, a curtailable PV
plant and a battery. The plan follows a day-ahead forecast plus a charging
offset during the day and a discharging offset in the evening. The SOC
ceiling is lowered at 20h, so a plan that fills the battery during the day
cannot be honoured without curtailing PV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admm import AdmmConfig
from .core import BatteryModel, ScenarioTrace, TimeGrid
from .simulation import Forecaster, Mode, ScenarioConfig

# the 288-slot cold start converges about twice as fast with rho0 = 2;
# a 2 % SOC back-off absorbs forecast drift once there is no PV left to curtail
REFERENCE_ADMM = AdmmConfig(rho0=2.0, soc_margin=0.02)


@dataclass(frozen=True)
class ReferenceDayParams:
    base_load_kw: float = 70.0
    office_peak_kw: float = 95.0
    rooftop_kwp: float = 82.0
    plant_kwp: float = 45.0
    # AR(1) forecast errors on the slot-average prosumption
    day_ahead_sigma_kw: float = 5.0
    intraday_sigma_kw: float = 1.5
    ar_coeff: float = 0.9
    tick_noise_kw: float = 2.0
    cloud_depth: float = 0.25
    charge_offset_kw: float = 35.0
    charge_hours: tuple[float, float] = (9.0, 17.0)
    discharge_offset_kw: float = 20.0
    discharge_hours: tuple[float, float] = (20.0, 24.0)
    energy_kwh: float = 560.0
    power_kw: float = 720.0
    soc_init: float = 0.5
    soc_floor: float = 0.2
    soc_ceiling: float = 0.75
    soc_ceiling_late: float = 0.70
    ceiling_step_hour: float = 20.0


def _ar1(rng: np.random.Generator, n: int, sigma: float, phi: float) -> np.ndarray:
    # stationary AR(1) with marginal standard deviation sigma
    out = np.empty(n)
    innov = sigma * np.sqrt(1.0 - phi ** 2)
    out[0] = rng.normal(0.0, sigma)
    for k in range(1, n):
        out[k] = phi * out[k - 1] + rng.normal(0.0, innov)
    return out


def _pv_shape(hours: np.ndarray) -> np.ndarray:
    return np.clip(np.sin(np.pi * (hours - 6.0) / 14.0), 0.0, None) ** 1.3


def _office_shape(hours: np.ndarray) -> np.ndarray:
    rise = 1.0 / (1.0 + np.exp(-(hours - 8.0) * 2.0))
    fall = 1.0 / (1.0 + np.exp((hours - 18.0) * 1.5))
    return rise * fall * (1.0 + 0.15 * np.sin(np.pi * (hours - 8.0) / 10.0))


def _smooth(x: np.ndarray, width: int) -> np.ndarray:
    pad = width // 2
    padded = np.pad(x, (pad, width - 1 - pad), mode="edge")
    return np.convolve(padded, np.ones(width) / width, mode="valid")


def reference_soc_bounds(params: ReferenceDayParams = ReferenceDayParams(),
                         grid: TimeGrid = TimeGrid()) -> tuple[np.ndarray, np.ndarray]:
    hours = np.arange(grid.slots_per_day) * grid.slot_hours
    lo = np.full(grid.slots_per_day, params.soc_floor)
    hi = np.where(hours < params.ceiling_step_hour, params.soc_ceiling, params.soc_ceiling_late)
    return lo, hi


def reference_day(seed: int = 42, params: ReferenceDayParams = ReferenceDayParams(),
                  grid: TimeGrid = TimeGrid()) -> tuple[ScenarioTrace, BatteryModel]:
    rng = np.random.default_rng(seed)
    n, per = grid.slots_per_day, grid.ticks_per_slot
    slot_h = (np.arange(n) + 0.5) * grid.slot_hours
    tick_h = (np.arange(n * per) + 0.5) * grid.tick_hours

    # slow cloud cover shared by both PV installations, in [1 - depth, 1]
    cloud_slot = 1.0 - params.cloud_depth * np.clip(np.abs(_ar1(rng, n, 0.6, 0.97)), 0.0, 1.0)
    cloud = np.interp(tick_h, slot_h, cloud_slot)
    cloud *= 1.0 + 0.02 * rng.standard_normal(n * per)
    cloud = np.clip(cloud, 0.0, 1.0)
    sun = _pv_shape(tick_h)

    rooftop = params.rooftop_kwp * sun * cloud
    office = params.base_load_kw + params.office_peak_kw * _office_shape(tick_h)
    drift = np.interp(tick_h, slot_h, _ar1(rng, n, params.day_ahead_sigma_kw, params.ar_coeff))
    load = office - rooftop + drift + params.tick_noise_kw * rng.standard_normal(n * per)
    mpp = params.plant_kwp * sun * cloud

    load_avg = load.reshape(n, per).mean(axis=1)
    mpp_avg = mpp.reshape(n, per).mean(axis=1)

    # day-ahead view: expected profiles without the realized drift
    office_slot = params.base_load_kw + params.office_peak_kw * _office_shape(slot_h)
    # E|N(0, 0.6)| is about 0.48, so this is roughly the expected cover
    mean_cloud = 1.0 - params.cloud_depth * 0.45
    load_day_ahead = office_slot - params.rooftop_kwp * _pv_shape(slot_h) * mean_cloud
    pv_day_ahead = params.plant_kwp * _pv_shape(slot_h) * mean_cloud
    offset = np.zeros(n)
    c0, c1 = params.charge_hours
    d0, d1 = params.discharge_hours
    offset[(slot_h >= c0) & (slot_h < c1)] = params.charge_offset_kw
    offset[(slot_h >= d0) & (slot_h < d1)] = -params.discharge_offset_kw
    plan = _smooth(load_day_ahead - pv_day_ahead, 12) + offset

    load_intraday = load_avg + _ar1(rng, n, params.intraday_sigma_kw, params.ar_coeff)
    gmax = np.clip(mpp_avg * (1.0 + 0.01 * rng.standard_normal(n)), 0.0, None)

    trace = ScenarioTrace(
        p_disp=plan,
        load_10s=load,
        pv_mpp_10s=mpp,
        pv_gmax_5min=gmax,
        load_forecast_5min=load_intraday,
        grid=grid,
    )
    lo, hi = reference_soc_bounds(params, grid)
    battery = BatteryModel(
        energy_kwh=params.energy_kwh,
        p_min_kw=-params.power_kw,
        p_max_kw=params.power_kw,
        soc=params.soc_init,
        soc_min=lo,
        soc_max=hi,
        slot_seconds=grid.slot_seconds,
    )
    return trace, battery


def reference_scenario(mode: Mode | str, seed: int = 42,
                       forecaster: Forecaster | str = Forecaster.TRACE,
                       admm: AdmmConfig = REFERENCE_ADMM) -> ScenarioConfig:
    trace, battery = reference_day(seed)
    return ScenarioConfig(mode=mode, trace=trace, battery=battery, admm=admm, forecaster=forecaster)
