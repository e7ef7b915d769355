"""Command-line entry points: run, gen and compare."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .io import (
    ConfigError, RunConfig, load_run_config, save_run_config, write_results,
    write_trace_files,
)
from .simulation import Forecaster, Mode, run_day, summarize
from .subproblems import InfeasibleSet
from .synthetic import REFERENCE_ADMM, ReferenceDayParams, reference_day

log = logging.getLogger("feederdispatch")


def _reference_config(trace_names: dict[str, str], seed: int) -> RunConfig:
    p = ReferenceDayParams()
    return RunConfig(
        mode=Mode.DISPATCH_ADMM.value,
        forecaster=Forecaster.TRACE.value,
        seed=seed,
        energy_kwh=p.energy_kwh,
        p_min_kw=-p.power_kw,
        p_max_kw=p.power_kw,
        soc_init_pct=100.0 * p.soc_init,
        admm={
            "rho0": REFERENCE_ADMM.rho0,
            "mu": REFERENCE_ADMM.mu,
            "tau_incr": REFERENCE_ADMM.tau_incr,
            "tau_decr": REFERENCE_ADMM.tau_decr,
            "eps_abs": REFERENCE_ADMM.eps_abs,
            "eps_rel": REFERENCE_ADMM.eps_rel,
            "max_iter": REFERENCE_ADMM.max_iter,
            "soc_margin_pct": 100.0 * REFERENCE_ADMM.soc_margin,
        },
        traces=trace_names,
    )


def cmd_gen(args) -> int:
    trace, battery = reference_day(args.seed)
    out = Path(args.out)
    names = write_trace_files(trace, battery, out)
    cfg_path = out / "reference.toml"
    save_run_config(_reference_config(names, args.seed), cfg_path)
    print(f"wrote {len(names)} trace files and {cfg_path}")
    return 0


def _load(args) -> RunConfig:
    cfg = load_run_config(args.config)
    overrides = {}
    if getattr(args, "mode", None):
        overrides["mode"] = args.mode
    if getattr(args, "forecaster", None):
        overrides["forecaster"] = args.forecaster
    return dataclasses.replace(cfg, **overrides)


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_day(cfg.to_scenario(), keep_ticks=args.ticks)
    paths = write_results(result, args.out, ticks=args.ticks)
    s = summarize(result)
    print(f"{result.mode.value}: RMSE {s.rmse_kw:.3f} kW, curtailment {s.curtailment_kwh:.2f} kWh, "
          f"max SOC-bound distance {s.max_soc_bound_distance_pct:.3f} %")
    print(f"results in {paths['slots'].parent}")
    return 0


_TABLE = [
    ("RMSE [kW]", "rmse_kw", "{:.3f}"),
    ("mean error [kW]", "mean_error_kw", "{:.4f}"),
    ("max |error| [kW]", "max_abs_error_kw", "{:.3f}"),
    ("PV energy [kWh]", "pv_energy_kwh", "{:.2f}"),
    ("curtailment [kWh]", "curtailment_kwh", "{:.2f}"),
    ("max SOC-bound distance [%]", "max_soc_bound_distance_pct", "{:.3f}"),
    ("ADMM iterations mean", "iterations_mean", "{:.2f}"),
    ("ADMM iterations max", "iterations_max", "{:.0f}"),
    ("ADMM accuracy mean [kW]", "accuracy_mean_kw", "{:.4f}"),
]


def cmd_compare(args) -> int:
    base = _load(args)
    stats = {}
    for mode in Mode:
        cfg = dataclasses.replace(base, mode=mode.value)
        result = run_day(cfg.to_scenario(), keep_ticks=False)
        stats[mode] = summarize(result)
        if args.out:
            write_results(result, Path(args.out) / mode.value)
    width = max(len(label) for label, _, _ in _TABLE)
    print(f"{'':{width}}  " + "  ".join(f"{m.value:>14}" for m in Mode))
    for label, key, fmt in _TABLE:
        cells = []
        for m in Mode:
            v = getattr(stats[m], key)
            cells.append(f"{'-' if v != v else fmt.format(v):>14}")
        print(f"{label:{width}}  " + "  ".join(cells))
    r = [stats[m].rmse_kw for m in Mode]
    ordered = r[0] > r[1] >= r[2]
    print(f"RMSE ordering no-dispatch > dispatch-only >= dispatch-admm: {'yes' if ordered else 'no'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feederdispatch",
        description="Battery/PV dispatch of a feeder: coordination, tracking and day playback.",
    )
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging verbosity (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="play back one day from a configuration file")
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", required=True, help="directory for slots.csv, summary.csv, admm_trace.csv")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="override the configured mode")
    p.add_argument("--forecaster", choices=[f.value for f in Forecaster],
                   help="override the configured forecaster")
    p.add_argument("--ticks", action="store_true", help="also write the 10-s log ticks.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen", help="write the synthetic reference day and a matching configuration")
    p.add_argument("--seed", type=int, default=42, help="generator seed (default 42)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compare", help="run all three modes and print a comparison table")
    p.add_argument("--config", required=True, help="TOML run configuration (its mode is ignored)")
    p.add_argument("--forecaster", choices=[f.value for f in Forecaster],
                   help="override the configured forecaster")
    p.add_argument("--out", help="if given, write each mode's results to OUT/<mode>/")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleSet, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
