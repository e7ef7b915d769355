"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from helpers import random_coordination_instance
from oracles import bisect_derivative, centralized_dispatch, dense_projection, hyperplane_kkt

from conftest import SESSION
from feederdispatch.admm import AdmmConfig, build_bess_qp, coupling_feasible, solve_coordination
from feederdispatch.simulation import Mode, run_day, summarize
from feederdispatch.subproblems import BoxChainQp, InfeasibleSet, bess_update, consensus_update, pv_update
from feederdispatch.synthetic import reference_scenario

SUITE_BUDGET_S = 300.0
# tight stopping tolerances for the oracle comparison; see the README
ORACLE_ADMM = AdmmConfig(eps_abs=1e-4, eps_rel=1e-5, max_iter=2000)


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
    print(line)
    SESSION["acceptance"].append(line)
    assert ok, line


@pytest.fixture(scope="module")
def reference_runs():
    return {m: summarize(run_day(reference_scenario(m), keep_ticks=False)) for m in Mode}


def test_criterion_1_admm_matches_centralized_solve():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_gap, worst_acc, failures, done = 0.0, -np.inf, [], 0
    while done < 200:
        n = int(rng.integers(1, 13))
        bat, e_hat, g_hat = random_coordination_instance(rng, n)
        try:
            qp = build_bess_qp(bat, n, ORACLE_ADMM)
        except InfeasibleSet:
            continue
        if not coupling_feasible(qp, e_hat, g_hat):
            continue
        res = solve_coordination(e_hat, g_hat, bat, ORACLE_ADMM)
        _, _, j_ref = centralized_dispatch(e_hat, g_hat, qp.lo, qp.hi, qp.chain_lo, qp.chain_hi)
        j_admm = float(np.sum((res.state.g - g_hat) ** 2))
        gap = abs(j_admm - j_ref)
        eps_pri = res.trace[-1].eps_pri
        worst_gap = max(worst_gap, gap / max(0.01 * j_ref, 1e-3))
        worst_acc = max(worst_acc, res.accuracy - eps_pri)
        if gap > max(0.01 * j_ref, 1e-3) or res.accuracy > eps_pri:
            failures.append(done)
        done += 1
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed <= 60.0
    report(1, "ADMM vs centralized QP", ok,
           f"{done} instances, {len(failures)} failing, worst gap/tolerance {worst_gap:.3f}, "
           f"worst accuracy-eps_pri {worst_acc:.2e} kW, {elapsed:.1f} s")


def test_criterion_2_subproblem_closed_forms():
    rng = np.random.default_rng(77)
    worst_pv = worst_cons = worst_bess = 0.0
    for _ in range(1000):
        g_hat, z, rho = rng.uniform(0, 200), rng.normal(0, 150), rng.uniform(1e-3, 1e3)
        ref = bisect_derivative(lambda g: 2 * (g - g_hat) + rho * (g - z), 0.0, g_hat)
        worst_pv = max(worst_pv, abs(pv_update([g_hat], [z], rho)[0] - ref))
        a, b, e = rng.normal(0, 300, 3)
        x, y = hyperplane_kkt(a, b, e)
        gc, bc = consensus_update([a], [b], [e])
        worst_cons = max(worst_cons, abs(gc[0] - x), abs(bc[0] - y))
    for _ in range(300):
        n = int(rng.integers(1, 7))
        lo, hi = -rng.uniform(0, 300, n), rng.uniform(0, 300, n)
        x0 = rng.uniform(lo, hi)
        s0 = np.cumsum(x0)
        c_lo = np.where(rng.random(n) < 0.7, s0 - rng.uniform(0, 200, n), -np.inf)
        c_hi = np.where(rng.random(n) < 0.7, s0 + rng.uniform(0, 200, n), np.inf)
        target = rng.normal(0, 500, n)
        got = bess_update(BoxChainQp(target, lo, hi, c_lo, c_hi))
        worst_bess = max(worst_bess, float(np.max(np.abs(got - dense_projection(target, lo, hi, c_lo, c_hi)))))
    ok = worst_pv <= 1e-8 and worst_cons <= 1e-8 and worst_bess <= 1e-6
    report(2, "subproblem closed forms", ok,
           f"pv {worst_pv:.1e}, consensus {worst_cons:.1e} over 1000 cases; "
           f"battery {worst_bess:.1e} over 300 horizons <= 6")


def test_criterion_3_convergence_envelope(reference_runs):
    s = reference_runs[Mode.DISPATCH_ADMM]
    ok = (s.iterations_mean <= 25 and s.iterations_max <= 50 and s.accuracy_mean_kw <= 0.1
          and s.nonconverged_slots == 0)
    report(3, "convergence envelope on the reference day", ok,
           f"iterations mean {s.iterations_mean:.2f} max {s.iterations_max:.0f}, "
           f"accuracy mean {s.accuracy_mean_kw:.4f} kW, {s.nonconverged_slots} not converged")


def test_criterion_4_soc_constraint(reference_runs):
    admm, only = reference_runs[Mode.DISPATCH_ADMM], reference_runs[Mode.DISPATCH_ONLY]
    ok = (admm.max_soc_bound_distance_pct <= 0 and only.max_soc_bound_distance_pct > 0
          and admm.curtailment_kwh > 0 and only.curtailment_kwh == 0)
    report(4, "SOC-bound experiment", ok,
           f"max distance admm {admm.max_soc_bound_distance_pct:.3f} % vs dispatch-only "
           f"{only.max_soc_bound_distance_pct:.3f} %; curtailment {admm.curtailment_kwh:.1f} vs "
           f"{only.curtailment_kwh:.1f} kWh")


def test_criterion_5_tracking_ordering(reference_runs):
    r = {m: reference_runs[m].rmse_kw for m in Mode}
    mean = reference_runs[Mode.DISPATCH_ADMM].mean_error_kw
    ok = (r[Mode.NO_DISPATCH] > r[Mode.DISPATCH_ONLY] >= r[Mode.DISPATCH_ADMM]
          and abs(mean) <= 0.05)
    report(5, "tracking ordering", ok,
           f"RMSE {r[Mode.NO_DISPATCH]:.3f} > {r[Mode.DISPATCH_ONLY]:.3f} >= "
           f"{r[Mode.DISPATCH_ADMM]:.3f} kW, admm mean error {mean:.4f} kW")


@pytest.mark.run_last
def test_criterion_6_invariant_suite():
    outcomes = dict(SESSION["invariant"])
    source = "this session"
    if not outcomes:
        # acceptance file run on its own: run the invariant tests in a child session
        tests_dir = Path(__file__).parent
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-m", "invariant", "-p", "no:cacheprovider",
             str(tests_dir)],
            capture_output=True, text=True, cwd=tests_dir.parent,
        )
        tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else ""
        outcomes = {"child session": "passed" if proc.returncode == 0 else "failed"}
        source = f"child session: {tail}"
    elapsed = time.perf_counter() - SESSION["start"]
    bad = [k for k, v in outcomes.items() if v != "passed"]
    ok = not bad and elapsed <= SUITE_BUDGET_S
    report(6, "invariant property tests", ok,
           f"{len(outcomes) - len(bad)}/{len(outcomes)} passed in {source}; "
           f"suite time {elapsed:.1f} s of {SUITE_BUDGET_S:.0f} s")
