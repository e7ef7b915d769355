"""Shared domain types and the battery state-of-charge model.

Sign conventions used across the package:

* battery power ``b`` is positive when the battery charges (SOC rises);
* PV power ``g`` is the plant's generation, always >= 0;
* prosumption ``L`` is the uncontrollable net load at the grid connection
  point (GCP), positive for consumption, and excludes the curtailable PV;
* the realized GCP power is ``P = L + b - g``.

SOC is stored as a fraction in [0, 1]. Percent only appears at the I/O
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class TimeGrid:
    """Day of ``slots_per_day`` coordination slots, each split into ticks."""

    slots_per_day: int = 288
    slot_seconds: float = 300.0
    ticks_per_slot: int = 30
    current_slot: int = 0

    def __post_init__(self):
        if self.slots_per_day < 1 or self.ticks_per_slot < 1:
            raise ValueError("slots_per_day and ticks_per_slot must be positive")
        if self.slot_seconds <= 0:
            raise ValueError("slot_seconds must be positive")
        if not 0 <= self.current_slot < self.slots_per_day:
            raise ValueError(
                f"current_slot {self.current_slot} outside [0, {self.slots_per_day})"
            )

    @property
    def tick_seconds(self) -> float:
        return self.slot_seconds / self.ticks_per_slot

    @property
    def ticks_per_day(self) -> int:
        return self.slots_per_day * self.ticks_per_slot

    @property
    def slot_hours(self) -> float:
        return self.slot_seconds / SECONDS_PER_HOUR

    @property
    def tick_hours(self) -> float:
        return self.tick_seconds / SECONDS_PER_HOUR

    def horizon(self) -> int:
        """Number of slots from the current one to the end of the day."""
        return self.slots_per_day - self.current_slot

    def at(self, slot: int) -> TimeGrid:
        return replace(self, current_slot=slot)


def _as_profile(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BatteryModel:
    """Battery ratings, SOC bound profiles and the current SOC.

    ``soc_min[j]`` / ``soc_max[j]`` bound the SOC throughout slot ``j``
    (at its start and at its end).
    """

    energy_kwh: float
    p_min_kw: float
    p_max_kw: float
    soc: float
    soc_min: np.ndarray
    soc_max: np.ndarray
    slot_seconds: float = 300.0

    def __post_init__(self):
        if not (np.isfinite(self.energy_kwh) and self.energy_kwh > 0):
            raise ValueError("energy_kwh must be positive and finite")
        if not (np.isfinite(self.p_min_kw) and np.isfinite(self.p_max_kw)):
            raise ValueError("battery power bounds must be finite")
        if not self.p_min_kw <= 0 <= self.p_max_kw:
            raise ValueError("battery power bounds must satisfy p_min <= 0 <= p_max")
        if not (np.isfinite(self.soc) and 0.0 <= self.soc <= 1.0):
            raise ValueError(f"soc {self.soc!r} outside [0, 1]")
        lo = _as_profile(self.soc_min, "soc_min")
        hi = _as_profile(self.soc_max, "soc_max")
        if lo.shape != hi.shape:
            raise ValueError("soc_min and soc_max must have the same length")
        bad = np.flatnonzero((lo < 0) | (hi > 1) | (lo > hi))
        if bad.size:
            j = int(bad[0])
            raise ValueError(
                f"invalid SOC bounds at slot {j}: min={lo[j]}, max={hi[j]}"
            )
        object.__setattr__(self, "soc_min", lo)
        object.__setattr__(self, "soc_max", hi)

    @property
    def alpha(self) -> float:
        """SOC change per kW held over one slot."""
        return self.slot_seconds / SECONDS_PER_HOUR / self.energy_kwh

    def with_soc(self, soc: float) -> BatteryModel:
        return replace(self, soc=float(soc))

    def tail(self, start: int) -> BatteryModel:
        """Same battery with bound profiles restricted to slots ``start:``."""
        return replace(self, soc_min=self.soc_min[start:], soc_max=self.soc_max[start:])


@dataclass(frozen=True)
class PvForecast:
    """Per-slot theoretical maximum PV output (kW)."""

    g_hat: np.ndarray

    def __post_init__(self):
        arr = _as_profile(self.g_hat, "g_hat")
        if np.any(arr < 0):
            raise ValueError("PV forecast must be non-negative")
        object.__setattr__(self, "g_hat", arr)

    def tail(self, start: int) -> PvForecast:
        return PvForecast(self.g_hat[start:])


@dataclass(frozen=True)
class ErrorForecast:
    """Per-slot corrective power the battery and PV must jointly inject (kW).

    ``e_hat[j] > 0`` means the pair has to inject ``e_hat[j]`` so that
    ``b_inj[j] + g[j] == e_hat[j]``.
    """

    e_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "e_hat", _as_profile(self.e_hat, "e_hat"))

    def tail(self, start: int) -> ErrorForecast:
        return ErrorForecast(self.e_hat[start:])


@dataclass(frozen=True)
class ScenarioTrace:
    """Input series for a day of playback.

    ``load_10s`` and ``pv_mpp_10s`` are tick-resolution measurements,
    ``p_disp``, ``pv_gmax_5min`` and the optional ``load_forecast_5min`` are
    slot-resolution.
    """

    p_disp: np.ndarray
    load_10s: np.ndarray
    pv_mpp_10s: np.ndarray
    pv_gmax_5min: np.ndarray
    load_forecast_5min: np.ndarray | None = None
    grid: TimeGrid = field(default_factory=TimeGrid)

    def __post_init__(self):
        n, m = self.grid.slots_per_day, self.grid.ticks_per_day
        checks = [
            ("p_disp", self.p_disp, n),
            ("load_10s", self.load_10s, m),
            ("pv_mpp_10s", self.pv_mpp_10s, m),
            ("pv_gmax_5min", self.pv_gmax_5min, n),
        ]
        if self.load_forecast_5min is not None:
            checks.append(("load_forecast_5min", self.load_forecast_5min, n))
        for name, values, length in checks:
            arr = _as_profile(values, name)
            if arr.size != length:
                raise ValueError(f"{name} has {arr.size} samples, expected {length}")
            object.__setattr__(self, name, arr)
        if np.any(self.pv_mpp_10s < 0) or np.any(self.pv_gmax_5min < 0):
            raise ValueError("PV series must be non-negative")

    def slot_average(self, series: np.ndarray) -> np.ndarray:
        return series.reshape(self.grid.slots_per_day, self.grid.ticks_per_slot).mean(axis=1)


def soc_step(soc: float, b_kw: float, battery: BatteryModel) -> float:
    """SOC after holding ``b_kw`` (charging positive) for one slot."""
    if not (np.isfinite(soc) and np.isfinite(b_kw)):
        raise ValueError("soc_step needs finite inputs")
    return soc + battery.alpha * b_kw


def soc_trajectory(soc_i: float, b_seq, battery: BatteryModel) -> np.ndarray:
    """SOC at the end of each slot of ``b_seq``, starting from ``soc_i``."""
    b = np.asarray(b_seq, dtype=float)
    if b.ndim != 1 or b.size < 1:
        raise ValueError("b_seq must be a non-empty sequence")
    if not (np.isfinite(soc_i) and np.all(np.isfinite(b))):
        raise ValueError("soc_trajectory needs finite inputs")
    return soc_i + battery.alpha * np.cumsum(b)
