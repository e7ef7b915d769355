"""Random instance generators shared by the tests."""

import numpy as np

from feederdispatch.core import BatteryModel
from feederdispatch.subproblems import BoxChainQp


def random_qp(rng, n, scale=300.0, p_inf=0.3, target_scale=600.0):
    """Feasible box + chain projection problem built around a known feasible point."""
    lo = -rng.uniform(0, scale, n)
    hi = rng.uniform(0, scale, n)
    x0 = rng.uniform(lo, hi)
    s0 = np.cumsum(x0)
    chain_lo = s0 - rng.uniform(0, scale, n) * (rng.random(n) < 0.8)
    chain_hi = s0 + rng.uniform(0, scale, n) * (rng.random(n) < 0.8)
    chain_lo[rng.random(n) < p_inf] = -np.inf
    chain_hi[rng.random(n) < p_inf] = np.inf
    target = rng.normal(0, target_scale, n)
    return BoxChainQp(target, lo, hi, chain_lo, chain_hi)


def random_coordination_instance(rng, n):
    """Battery and forecasts whose coupled problem may or may not be feasible."""
    energy = rng.uniform(20, 600)
    pmax = rng.uniform(5, 200)
    smin = rng.uniform(0, 0.4, n)
    smax = np.minimum(smin + rng.uniform(0.05, 0.6, n), 1.0)
    soc = rng.uniform(smin[0], smax[0])
    bat = BatteryModel(energy, -pmax, pmax, soc, smin, smax)
    g_hat = np.maximum(rng.normal(20, 15, n), 0) * (rng.random(n) < 0.8)
    e_hat = rng.normal(0, 40, n)
    return bat, e_hat, g_hat
