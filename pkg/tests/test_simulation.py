import numpy as np
import pytest

from feederdispatch.admm import AdmmConfig
from feederdispatch.core import BatteryModel, ScenarioTrace, TimeGrid
from feederdispatch.simulation import (
    SLOT_COLUMNS, Forecaster, Mode, ScenarioConfig, build_error_forecast, forecast_prosumption,
    run_day, summarize, summarize_columns,
)
from feederdispatch.synthetic import reference_day, reference_scenario

GRID = TimeGrid(slots_per_day=12, ticks_per_slot=30)


def small_day(seed=0, plan_offset=0.0, soc_lo=0.0, soc_hi=1.0, soc=0.5):
    """Twelve slots with noisy load and PV around smooth profiles."""
    rng = np.random.default_rng(seed)
    per = GRID.ticks_per_slot
    load = np.repeat(rng.uniform(60, 140, 12), per) + rng.normal(0, 4, GRID.ticks_per_day)
    mpp = np.maximum(np.repeat(rng.uniform(0, 40, 12), per) + rng.normal(0, 2, GRID.ticks_per_day), 0)
    load_avg = load.reshape(12, per).mean(axis=1)
    mpp_avg = mpp.reshape(12, per).mean(axis=1)
    trace = ScenarioTrace(
        p_disp=load_avg - mpp_avg + plan_offset,
        load_10s=load,
        pv_mpp_10s=mpp,
        pv_gmax_5min=mpp_avg,
        load_forecast_5min=load_avg,
        grid=GRID,
    )
    bat = BatteryModel(200.0, -100.0, 100.0, soc, np.full(12, soc_lo), np.full(12, soc_hi))
    return trace, bat


def scenario(mode, forecaster=Forecaster.PERFECT, **kw):
    trace, bat = small_day(**kw)
    return ScenarioConfig(mode, trace, bat, AdmmConfig(), forecaster)


class TestModes:
    def test_perfect_plan_needs_no_curtailment(self):
        res = run_day(scenario(Mode.DISPATCH_ADMM))
        s = summarize(res)
        assert s.curtailment_kwh == pytest.approx(0.0, abs=0.05)
        assert s.rmse_kw <= 1e-6
        assert s.nonconverged_slots == 0

    def test_no_dispatch_leaves_battery_idle(self):
        cfg = scenario(Mode.NO_DISPATCH, plan_offset=7.0)
        res = run_day(cfg)
        assert np.all(res.ticks["battery_kw"] == 0)
        expected = (cfg.trace.slot_average(cfg.trace.load_10s)
                    - cfg.trace.slot_average(cfg.trace.pv_mpp_10s) - cfg.trace.p_disp)
        np.testing.assert_allclose(res.column("tracking_error_kw"), expected, atol=1e-9)
        np.testing.assert_allclose(res.column("tracking_error_kw"), -7.0, atol=1e-9)
        assert np.all(res.column("iterations") == 0)

    def test_dispatch_only_tracks_a_shifted_plan(self):
        res = run_day(scenario(Mode.DISPATCH_ONLY, plan_offset=20.0))
        assert summarize(res).rmse_kw <= 1e-6
        np.testing.assert_allclose(res.column("battery_kw"), 20.0, atol=1e-9)

    def test_admm_curtails_when_the_battery_is_full(self):
        # plan asks the feeder to import 30 kW less than needed: the battery must absorb PV
        res = run_day(scenario(Mode.DISPATCH_ADMM, plan_offset=-30.0, soc=0.99, soc_hi=1.0))
        s = summarize(res)
        assert s.curtailment_kwh > 0
        assert s.max_soc_bound_distance_pct <= 1e-6

    @pytest.mark.invariant
    def test_soc_is_carried_from_slot_to_slot(self):
        res = run_day(scenario(Mode.DISPATCH_ONLY, plan_offset=12.0))
        start, end = res.column("soc_start_pct"), res.column("soc_end_pct")
        np.testing.assert_allclose(start[1:], end[:-1])
        assert start[0] == 50.0

    @pytest.mark.invariant
    def test_tick_energy_balance(self):
        res = run_day(scenario(Mode.DISPATCH_ADMM, plan_offset=5.0))
        t = res.ticks
        np.testing.assert_allclose(t["gcp_kw"], t["prosumption_kw"] + t["battery_kw"] - t["pv_kw"],
                                   atol=1e-9)
        soc = np.concatenate([[0.5], t["soc"]])
        np.testing.assert_allclose(np.diff(soc), t["battery_kw"] * GRID.tick_hours / 200.0,
                                   atol=1e-12)

    def test_pv_never_exceeds_setpoint_or_mpp(self):
        cfg = scenario(Mode.DISPATCH_ADMM, plan_offset=-30.0, soc=0.99)
        res = run_day(cfg)
        per = GRID.ticks_per_slot
        cap = np.repeat(res.column("pv_setpoint_kw"), per)
        assert np.all(res.ticks["pv_kw"] <= np.minimum(cap, cfg.trace.pv_mpp_10s) + 1e-12)

    @pytest.mark.invariant
    def test_runs_are_deterministic(self):
        a = run_day(scenario(Mode.DISPATCH_ADMM, plan_offset=3.0))
        b = run_day(scenario(Mode.DISPATCH_ADMM, plan_offset=3.0))
        assert a.slots == b.slots and a.admm_trace == b.admm_trace


class TestErrorForecast:
    def test_perfect(self):
        e = build_error_forecast([100.0, 90.0, 80.0], [110.0, 95.0, 70.0], 1)
        assert e.e_hat.tolist() == [5.0, -10.0]

    def test_persistence_with_flat_history(self):
        trace, _ = small_day()
        realized = np.full(12, 101.0)
        fc = forecast_prosumption(trace, Forecaster.PERSISTENCE, 4, realized)
        assert np.all(fc[4:] == 101.0)
        e = build_error_forecast(np.full(12, 101.0), fc, 4)
        assert np.all(e.e_hat == 0.0)

    def test_persistence_after_step(self):
        trace, _ = small_day()
        realized = np.zeros(12)
        realized[:3] = [100.0, 100.0, 130.0]
        fc = forecast_prosumption(trace, Forecaster.PERSISTENCE, 3, realized)
        assert np.all(fc[3:] == 130.0)

    def test_persistence_slot_zero_uses_plan(self):
        trace, _ = small_day()
        fc = forecast_prosumption(trace, Forecaster.PERSISTENCE, 0, np.zeros(12))
        np.testing.assert_array_equal(fc, trace.p_disp)

    def test_validation(self):
        with pytest.raises(ValueError):
            build_error_forecast([1.0, 2.0], [1.0], 0)
        with pytest.raises(ValueError):
            build_error_forecast([1.0], [1.0], 1)


class TestSummary:
    def cols(self, e):
        n = len(e)
        z = np.zeros(n)
        return {"tracking_error_kw": np.asarray(e, float), "pv_max_kw": z, "pv_setpoint_kw": z,
                "iterations": z, "accuracy_kw": z, "pv_kw": z, "soc_bound_distance_pct": z,
                "converged": np.ones(n)}

    def test_zero_error(self):
        s = summarize_columns(self.cols([0.0, 0.0]))
        assert (s.rmse_kw, s.mean_error_kw, s.max_abs_error_kw) == (0.0, 0.0, 0.0)
        assert np.isnan(s.iterations_mean)

    def test_rmse_of_three_and_four(self):
        s = summarize_columns(self.cols([3.0, -4.0]))
        assert s.rmse_kw == pytest.approx(np.sqrt(12.5))
        assert s.mean_error_kw == -0.5 and s.max_abs_error_kw == 4.0

    def test_curtailment_from_setpoint(self):
        c = self.cols([0.0, 0.0])
        c["pv_max_kw"] = np.array([12.0, 6.0])
        c["pv_setpoint_kw"] = np.array([0.0, 6.0])
        assert summarize_columns(c, slot_hours=0.5).curtailment_kwh == 6.0

    def test_admm_stats_only_where_used(self):
        c = self.cols([0.0, 0.0, 0.0])
        c["iterations"] = np.array([0.0, 4.0, 8.0])
        c["accuracy_kw"] = np.array([np.nan, 0.1, 0.3])
        s = summarize_columns(c)
        assert (s.iterations_mean, s.iterations_max) == (6.0, 8.0)
        assert s.accuracy_mean_kw == pytest.approx(0.2)

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize_columns(self.cols([]))

    def test_summary_matches_slot_columns(self):
        res = run_day(scenario(Mode.DISPATCH_ADMM, plan_offset=4.0))
        s = summarize(res)
        e = res.column("tracking_error_kw")
        assert s.rmse_kw == pytest.approx(np.sqrt(np.mean(e ** 2)))
        assert set(SLOT_COLUMNS) >= {"tracking_error_kw", "pv_setpoint_kw", "soc_bound_distance_pct"}


class TestScenarioConfig:
    def test_initial_soc_outside_first_bounds(self):
        trace, _ = small_day()
        bat = BatteryModel(200.0, -100.0, 100.0, 0.9, np.full(12, 0.1), np.full(12, 0.8))
        with pytest.raises(ValueError, match="initial SOC"):
            ScenarioConfig(Mode.DISPATCH_ONLY, trace, bat)

    def test_profile_length(self):
        trace, _ = small_day()
        bat = BatteryModel(200.0, -100.0, 100.0, 0.5, np.zeros(5), np.ones(5))
        with pytest.raises(ValueError, match="5 slots"):
            ScenarioConfig(Mode.DISPATCH_ONLY, trace, bat)

    def test_trace_forecaster_needs_forecast(self):
        trace, bat = small_day()
        bare = ScenarioTrace(trace.p_disp, trace.load_10s, trace.pv_mpp_10s, trace.pv_gmax_5min,
                             grid=GRID)
        with pytest.raises(ValueError, match="load forecast"):
            ScenarioConfig(Mode.DISPATCH_ADMM, bare, bat, forecaster=Forecaster.TRACE)

    def test_mode_strings_accepted(self):
        trace, bat = small_day()
        assert ScenarioConfig("dispatch-only", trace, bat).mode is Mode.DISPATCH_ONLY


class TestReferenceDay:
    def test_generator_is_seeded(self):
        a, _ = reference_day(3)
        b, _ = reference_day(3)
        c, _ = reference_day(4)
        np.testing.assert_array_equal(a.load_10s, b.load_10s)
        assert not np.array_equal(a.load_10s, c.load_10s)

    def test_shapes_and_bounds(self):
        trace, bat = reference_day(42)
        assert trace.load_10s.size == 8640 and trace.p_disp.size == 288
        assert bat.soc_min.min() >= 0.2 and bat.soc_max.max() <= 0.75
        assert np.all(trace.pv_mpp_10s >= 0)

    def test_dispatch_only_run_is_complete(self):
        res = run_day(reference_scenario(Mode.DISPATCH_ONLY), keep_ticks=False)
        assert len(res.slots) == 288 and res.ticks == {}
