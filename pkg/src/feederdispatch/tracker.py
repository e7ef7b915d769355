"""Ten-second battery tracking inside one coordination slot.

The controller is a remaining-energy law. At every tick it picks the battery
power that would bring the slot-average GCP power onto the dispatch target
if the current prosumption and PV output held for the rest of the slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BatteryModel, TimeGrid

# keeps the guard from landing a rounding error outside the bounds
_GUARD_EPS = 1e-9


@dataclass(frozen=True)
class TickLog:
    prosumption_kw: np.ndarray
    pv_kw: np.ndarray
    battery_kw: np.ndarray
    gcp_kw: np.ndarray
    soc: np.ndarray  # SOC after each tick
    saturated: np.ndarray


@dataclass(frozen=True)
class SlotReport:
    slot: int
    p_disp_kw: float
    gcp_avg_kw: float
    tracking_error_kw: float
    battery_avg_kw: float
    pv_avg_kw: float
    soc_start: float
    soc_end: float
    # worst signed distance to the slot's SOC bounds over all tick samples
    soc_bound_distance: float
    saturated_ticks: int
    ticks: TickLog


class PrematureClose(RuntimeError):
    """slot_close called before every tick of the slot was played."""


@dataclass
class SlotTracker:
    """Tracks ``p_disp_slot`` over one slot; ``enabled=False`` keeps the battery idle."""

    p_disp_slot: float
    battery: BatteryModel
    slot: int = 0
    grid: TimeGrid = field(default_factory=TimeGrid)
    enabled: bool = True
    elapsed_ticks: int = 0
    energy_error_kwh: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.p_disp_slot):
            raise ValueError("dispatch target must be finite")
        if not 0 <= self.slot < self.battery.soc_min.size:
            raise ValueError(f"slot {self.slot} has no SOC bounds")
        if self.grid.slot_seconds != self.battery.slot_seconds:
            raise ValueError("battery and time grid disagree on the slot length")
        self.soc = float(self.battery.soc)
        self._soc_start = self.soc
        n = self.grid.ticks_per_slot
        self._log = {k: np.zeros(n) for k in ("prosumption_kw", "pv_kw", "battery_kw", "gcp_kw", "soc")}
        self._saturated = np.zeros(n, dtype=bool)

    @property
    def soc_guard(self) -> tuple[float, float]:
        return float(self.battery.soc_min[self.slot]), float(self.battery.soc_max[self.slot])

    @property
    def b_limits(self) -> tuple[float, float]:
        return self.battery.p_min_kw, self.battery.p_max_kw

    def _guard_limits(self) -> tuple[float, float]:
        """Power range that does not push the SOC further outside its bounds this tick."""
        lo_soc, hi_soc = self.soc_guard
        kwh_per_kw = self.grid.tick_hours
        e = self.battery.energy_kwh
        upper = max((hi_soc - _GUARD_EPS - self.soc) * e / kwh_per_kw, 0.0)
        lower = min((lo_soc + _GUARD_EPS - self.soc) * e / kwh_per_kw, 0.0)
        p_min, p_max = self.b_limits
        return max(p_min, lower), min(p_max, upper)

    def setpoint(self, prosumption_kw: float, pv_kw: float) -> tuple[float, bool]:
        """Battery power (charging positive) for the coming tick and a saturation flag."""
        if not self.enabled:
            return 0.0, False
        remaining_h = (self.grid.ticks_per_slot - self.elapsed_ticks) * self.grid.tick_hours
        required_gcp = self.p_disp_slot - self.energy_error_kwh / remaining_h
        wanted = required_gcp - (prosumption_kw - pv_kw)
        lo, hi = self._guard_limits()
        b = min(max(wanted, lo), hi)
        return b, b != wanted

    def tick(self, measured_prosumption_kw: float, pv_actual_kw: float) -> float:
        if self.elapsed_ticks >= self.grid.ticks_per_slot:
            raise RuntimeError("all ticks of this slot have been played")
        if not (np.isfinite(measured_prosumption_kw) and np.isfinite(pv_actual_kw)):
            raise ValueError("tick measurements must be finite")
        b, sat = self.setpoint(measured_prosumption_kw, pv_actual_kw)
        gcp = measured_prosumption_kw + b - pv_actual_kw
        h = self.grid.tick_hours
        self.energy_error_kwh += (gcp - self.p_disp_slot) * h
        self.soc += b * h / self.battery.energy_kwh
        m = self.elapsed_ticks
        self._log["prosumption_kw"][m] = measured_prosumption_kw
        self._log["pv_kw"][m] = pv_actual_kw
        self._log["battery_kw"][m] = b
        self._log["gcp_kw"][m] = gcp
        self._log["soc"][m] = self.soc
        self._saturated[m] = sat
        self.elapsed_ticks += 1
        return b

    def slot_close(self) -> SlotReport:
        if self.elapsed_ticks != self.grid.ticks_per_slot:
            raise PrematureClose(
                f"slot {self.slot} closed after {self.elapsed_ticks} of "
                f"{self.grid.ticks_per_slot} ticks"
            )
        log = {k: v.copy() for k, v in self._log.items()}
        for v in log.values():
            v.setflags(write=False)
        gcp_avg = float(np.mean(log["gcp_kw"]))
        lo_soc, hi_soc = self.soc_guard
        samples = np.concatenate([[self._soc_start], log["soc"]])
        dist = float(np.max(np.maximum(samples - hi_soc, lo_soc - samples)))
        return SlotReport(
            slot=self.slot,
            p_disp_kw=float(self.p_disp_slot),
            gcp_avg_kw=gcp_avg,
            tracking_error_kw=gcp_avg - float(self.p_disp_slot),
            battery_avg_kw=float(np.mean(log["battery_kw"])),
            pv_avg_kw=float(np.mean(log["pv_kw"])),
            soc_start=self._soc_start,
            soc_end=self.soc,
            soc_bound_distance=dist,
            saturated_ticks=int(self._saturated.sum()),
            ticks=TickLog(saturated=self._saturated.copy(), **log),
        )


def tick(tracker: SlotTracker, measured_prosumption_kw: float, pv_actual_kw: float) -> float:
    return tracker.tick(measured_prosumption_kw, pv_actual_kw)


def slot_close(tracker: SlotTracker) -> SlotReport:
    return tracker.slot_close()

