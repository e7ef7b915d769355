"""Run configuration, trace CSV files and result files.

SOC is in percent in every file and fraction everywhere else. Trace files
store floats at full precision so that writing and reading them back is
lossless; result files use six decimals.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli_w

from .admm import AdmmConfig
from .core import BatteryModel, ScenarioTrace, TimeGrid
from .simulation import (
    SLOT_COLUMNS, SUMMARY_COLUMNS, TRACE_COLUMNS, DayResult, Forecaster, Mode,
    ScenarioConfig, SummaryStats, summarize,
)
from .synthetic import reference_day

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid run configuration or trace file."""


class TraceFileError(ConfigError):
    pass


# --------------------------------------------------------------------- traces

PLAN_HEADER = ("slot", "p_disp_kw")
TICK_HEADER = ("tick", "value_kw")
SLOT_HEADER = ("slot", "value_kw")
SOC_HEADER = ("slot", "soc_min_pct", "soc_max_pct")


def _write_rows(path: Path, header, rows) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _read_table(path: Path, header) -> np.ndarray:
    """Rows of a trace CSV as floats; the index column must run 0, 1, 2, ..."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise TraceFileError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got is None or tuple(c.strip() for c in got) != tuple(header):
            raise TraceFileError(f"{path}: expected header {','.join(header)}, got {got}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TraceFileError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                idx = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError:
                raise TraceFileError(f"{path}:{lineno}: cannot parse {row}") from None
            if idx != len(rows):
                raise TraceFileError(f"{path}:{lineno}: index {idx} out of sequence, expected {len(rows)}")
            if not all(math.isfinite(v) for v in vals):
                raise TraceFileError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise TraceFileError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def write_series(path, values, header=SLOT_HEADER) -> None:
    _write_rows(path, header, ((i, repr(float(v))) for i, v in enumerate(values)))


def read_series(path, header=SLOT_HEADER) -> np.ndarray:
    return _read_table(path, header)[:, 0]


def write_soc_bounds(path, soc_min, soc_max) -> None:
    rows = ((i, repr(100.0 * float(lo)), repr(100.0 * float(hi)))
            for i, (lo, hi) in enumerate(zip(soc_min, soc_max)))
    _write_rows(path, SOC_HEADER, rows)


def read_soc_bounds(path) -> tuple[np.ndarray, np.ndarray]:
    """SOC bound profile as fractions."""
    tab = _read_table(path, SOC_HEADER)
    for j, (lo, hi) in enumerate(tab):
        if not 0.0 <= lo <= hi <= 100.0:
            raise TraceFileError(
                f"{path}: slot {j} needs 0 <= soc_min_pct <= soc_max_pct <= 100, got {lo}, {hi}"
            )
    return tab[:, 0] / 100.0, tab[:, 1] / 100.0


TRACE_FILES = {
    "plan": "plan.csv",
    "load_10s": "load_10s.csv",
    "pv_mpp_10s": "pv_mpp_10s.csv",
    "pv_gmax_5min": "pv_gmax_5min.csv",
    "load_forecast_5min": "load_forecast_5min.csv",
    "soc_bounds": "soc_bounds.csv",
}


def write_trace_files(trace: ScenarioTrace, battery: BatteryModel, out_dir) -> dict[str, str]:
    """Write a trace and the battery's SOC bounds; returns the file names by key."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = dict(TRACE_FILES)
    write_series(out / names["plan"], trace.p_disp, PLAN_HEADER)
    write_series(out / names["load_10s"], trace.load_10s, TICK_HEADER)
    write_series(out / names["pv_mpp_10s"], trace.pv_mpp_10s, TICK_HEADER)
    write_series(out / names["pv_gmax_5min"], trace.pv_gmax_5min, SLOT_HEADER)
    if trace.load_forecast_5min is not None:
        write_series(out / names["load_forecast_5min"], trace.load_forecast_5min, SLOT_HEADER)
    else:
        del names["load_forecast_5min"]
    write_soc_bounds(out / names["soc_bounds"], battery.soc_min, battery.soc_max)
    return names


def read_trace_files(paths: dict[str, Path], grid: TimeGrid = TimeGrid()):
    """Load a :class:`ScenarioTrace` and the SOC bound profile from trace files."""
    fc = paths.get("load_forecast_5min")
    trace = ScenarioTrace(
        p_disp=read_series(paths["plan"], PLAN_HEADER),
        load_10s=read_series(paths["load_10s"], TICK_HEADER),
        pv_mpp_10s=read_series(paths["pv_mpp_10s"], TICK_HEADER),
        pv_gmax_5min=read_series(paths["pv_gmax_5min"], SLOT_HEADER),
        load_forecast_5min=None if fc is None else read_series(fc, SLOT_HEADER),
        grid=grid,
    )
    return trace, read_soc_bounds(paths["soc_bounds"])


# --------------------------------------------------------------------- config

_BATTERY_KEYS = ("energy_kwh", "p_min_kw", "p_max_kw", "soc_init_pct")
_ADMM_FLOAT = ("rho0", "mu", "tau_incr", "tau_decr", "eps_abs", "eps_rel", "soc_margin_pct")
_TRACE_KEYS = tuple(TRACE_FILES)
_REQUIRED_TRACES = ("plan", "load_10s", "pv_mpp_10s", "pv_gmax_5min", "soc_bounds")


@dataclass(frozen=True)
class RunConfig:
    """Contents of a run configuration file.

    Without a ``traces`` table the run uses the synthetic reference day
    generated from ``seed``. Trace paths are relative to ``base_dir``.
    With ``forecaster`` unset, the trace's own load forecast is used when it
    has one and persistence otherwise.
    """

    mode: str
    energy_kwh: float
    p_min_kw: float
    p_max_kw: float
    soc_init_pct: float
    forecaster: str | None = None
    seed: int = 42
    admm: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def admm_config(self) -> AdmmConfig:
        kw = dict(self.admm)
        if "soc_margin_pct" in kw:
            kw["soc_margin"] = kw.pop("soc_margin_pct") / 100.0
        try:
            return AdmmConfig(**kw)
        except ValueError as exc:
            raise ConfigError(f"admm: {exc}") from None

    def to_scenario(self) -> ScenarioConfig:
        admm = self.admm_config()
        if self.traces:
            paths = {k: self.base_dir / v for k, v in self.traces.items()}
            try:
                trace, (soc_min, soc_max) = read_trace_files(paths)
            except TraceFileError:
                raise
            except ValueError as exc:
                raise ConfigError(f"traces: {exc}") from None
        else:
            trace, ref = reference_day(self.seed)
            soc_min, soc_max = ref.soc_min, ref.soc_max
        try:
            battery = BatteryModel(
                energy_kwh=self.energy_kwh, p_min_kw=self.p_min_kw, p_max_kw=self.p_max_kw,
                soc=self.soc_init_pct / 100.0, soc_min=soc_min, soc_max=soc_max,
                slot_seconds=trace.grid.slot_seconds,
            )
        except ValueError as exc:
            raise ConfigError(f"battery: {exc}") from None
        forecaster = self.forecaster
        if forecaster is None:
            has_fc = trace.load_forecast_5min is not None
            forecaster = (Forecaster.TRACE if has_fc else Forecaster.PERSISTENCE).value
        try:
            return ScenarioConfig(mode=self.mode, trace=trace, battery=battery,
                                  admm=admm, forecaster=forecaster)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _number(flat: dict, key: str) -> float:
    v = flat[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key}: expected a finite number, got {v!r}")
    return float(v)


def _integer(flat: dict, key: str) -> int:
    v = flat[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return v


def _choice(flat: dict, key: str, enum_cls) -> str:
    v = flat[key]
    allowed = [m.value for m in enum_cls]
    if v not in allowed:
        raise ConfigError(f"{key}: expected one of {allowed}, got {v!r}")
    return v


def parse_run_config(data: dict, base_dir: Path = Path(".")) -> RunConfig:
    flat = _flatten(data)
    known = {"mode", "forecaster", "seed"}
    known |= {f"battery.{k}" for k in _BATTERY_KEYS}
    known |= {f"admm.{k}" for k in _ADMM_FLOAT + ("max_iter",)}
    known |= {f"traces.{k}" for k in _TRACE_KEYS}
    for key in flat:
        if key not in known:
            raise ConfigError(f"{key}: unknown key")
    for key in ("mode",) + tuple(f"battery.{k}" for k in _BATTERY_KEYS):
        if key not in flat:
            raise ConfigError(f"{key}: missing required key")

    admm = {k: _number(flat, f"admm.{k}") for k in _ADMM_FLOAT if f"admm.{k}" in flat}
    if "admm.max_iter" in flat:
        admm["max_iter"] = _integer(flat, "admm.max_iter")
    traces = {}
    for k in _TRACE_KEYS:
        key = f"traces.{k}"
        if key in flat:
            if not isinstance(flat[key], str):
                raise ConfigError(f"{key}: expected a path string, got {flat[key]!r}")
            traces[k] = flat[key]
    if traces:
        for k in _REQUIRED_TRACES:
            if k not in traces:
                raise ConfigError(f"traces.{k}: missing required key")

    cfg = RunConfig(
        mode=_choice(flat, "mode", Mode),
        forecaster=_choice(flat, "forecaster", Forecaster) if "forecaster" in flat else None,
        seed=_integer(flat, "seed") if "seed" in flat else 42,
        energy_kwh=_number(flat, "battery.energy_kwh"),
        p_min_kw=_number(flat, "battery.p_min_kw"),
        p_max_kw=_number(flat, "battery.p_max_kw"),
        soc_init_pct=_number(flat, "battery.soc_init_pct"),
        admm=admm,
        traces=traces,
        base_dir=Path(base_dir),
    )
    cfg.admm_config()  # surfaces invalid ADMM values at load time
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_run_config(data, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def run_config_dict(cfg: RunConfig) -> dict:
    data: dict = {"mode": cfg.mode, "seed": cfg.seed}
    if cfg.forecaster is not None:
        data["forecaster"] = cfg.forecaster
    data["battery"] = {k: getattr(cfg, k) for k in _BATTERY_KEYS}
    if cfg.admm:
        data["admm"] = dict(cfg.admm)
    if cfg.traces:
        data["traces"] = dict(cfg.traces)
    return data


def save_run_config(cfg: RunConfig, path) -> None:
    path = Path(path)
    try:
        path.write_text(tomli_w.dumps(run_config_dict(cfg)))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def load_scenario(config_path) -> ScenarioConfig:
    cfg = load_run_config(config_path)
    try:
        return cfg.to_scenario()
    except ConfigError as exc:
        raise ConfigError(f"{config_path}: {exc}") from None


# -------------------------------------------------------------------- results

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_results(result: DayResult, out_dir, ticks: bool = False) -> dict[str, Path]:
    """Write slots.csv, summary.csv, admm_trace.csv and optionally ticks.csv."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    paths = {
        "slots": out / "slots.csv",
        "summary": out / "summary.csv",
        "admm_trace": out / "admm_trace.csv",
    }
    _write_rows(paths["slots"], SLOT_COLUMNS,
                ([_fmt(v) for v in asdict(r).values()] for r in result.slots))
    stats = summarize(result)
    rows = [("mode", result.mode.value)]
    rows += [(k, _fmt(v)) for k, v in asdict(stats).items()]
    _write_rows(paths["summary"], ("metric", "value"), rows)
    _write_rows(paths["admm_trace"], TRACE_COLUMNS,
                ([_fmt(v) for v in asdict(r).values()] for r in result.admm_trace))
    if ticks and result.ticks:
        paths["ticks"] = out / "ticks.csv"
        cols = list(result.ticks)
        n = len(result.ticks[cols[0]])
        per = n // len(result.slots)
        header = ["tick", "slot"] + [c if c != "soc" else "soc_pct" for c in cols]
        data = [result.ticks[c] * (100.0 if c == "soc" else 1.0) for c in cols]
        _write_rows(paths["ticks"], header,
                    ([str(t), str(t // per)] + [_fmt(d[t]) for d in data] for t in range(n)))
    return paths


def read_slots(path) -> dict[str, np.ndarray]:
    """Columns of a slots.csv file."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SLOT_COLUMNS:
            raise TraceFileError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in SLOT_COLUMNS}


def read_summary(path) -> tuple[str, SummaryStats]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = {r["metric"]: r["value"] for r in csv.DictReader(fh)}
    kinds = {f.name: f.type for f in fields(SummaryStats)}
    values = {}
    for k in SUMMARY_COLUMNS:
        if k not in rows:
            raise TraceFileError(f"{path}: missing metric {k}")
        values[k] = int(rows[k]) if kinds[k] in (int, "int") else float(rows[k])
    return rows.get("mode", ""), SummaryStats(**values)
