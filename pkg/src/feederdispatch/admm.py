"""Five-minute coordination layer: consensus ADMM between PV and battery.

Inside the coordinator the battery variable is in *injection* sign
(``b_inj = -b_charge``) so that the coupling reads ``g + b_inj == e_hat``,
where ``e_hat`` is the power the pair must inject at the GCP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import BatteryModel, ErrorForecast, PvForecast
from .subproblems import (
    BoxChainQp, InfeasibleSet, _project_box_chain, check_feasible, consensus_update, pv_update,
    reachable_prefix_sums,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdmmConfig:
    rho0: float = 1.0
    mu: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0
    eps_abs: float = 1e-2
    eps_rel: float = 1e-3
    max_iter: int = 50
    # SOC back-off (fraction) applied to the bound profile when planning;
    # shrunk automatically when the full back-off leaves no feasible plan
    soc_margin: float = 0.0
    bess_tol: float = 1e-6

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if not self.mu > 1:
            raise ValueError("mu must be > 1")
        if not (self.tau_incr > 1 and self.tau_decr > 1):
            raise ValueError("tau_incr and tau_decr must be > 1")
        if not (self.eps_abs > 0 and self.eps_rel > 0 and self.bess_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be an integer >= 1")
        if not 0 <= self.soc_margin < 0.5:
            raise ValueError("soc_margin must lie in [0, 0.5)")


@dataclass
class AdmmState:
    """Iterate of the scaled-form ADMM over one horizon."""

    g: np.ndarray
    b: np.ndarray
    gc: np.ndarray
    bc: np.ndarray
    ug: np.ndarray
    ub: np.ndarray
    rho: float
    k: int = 0
    r_norm: float = np.inf
    s_norm: float = np.inf

    @property
    def size(self) -> int:
        return self.g.size

    def copy(self) -> AdmmState:
        return replace(
            self,
            g=self.g.copy(), b=self.b.copy(), gc=self.gc.copy(), bc=self.bc.copy(),
            ug=self.ug.copy(), ub=self.ub.copy(),
        )

    def with_rho(self, rho: float) -> AdmmState:
        """Copy with penalty ``rho``; scaled duals are rescaled so ``rho * u`` is kept."""
        if not rho > 0:
            raise ValueError("penalty must be positive")
        out = self.copy()
        out.ug *= self.rho / rho
        out.ub *= self.rho / rho
        out.rho = rho
        return out

    def shifted(self) -> AdmmState | None:
        """Warm start for the next slot: drop the slot just actuated."""
        if self.size < 2:
            return None
        return AdmmState(
            g=self.g[1:].copy(), b=self.b[1:].copy(),
            gc=self.gc[1:].copy(), bc=self.bc[1:].copy(),
            ug=self.ug[1:].copy(), ub=self.ub[1:].copy(),
            rho=self.rho,
        )


@dataclass(frozen=True)
class IterationRecord:
    k: int
    r_norm: float
    s_norm: float
    rho: float
    eps_pri: float
    eps_dual: float


@dataclass
class CoordinationResult:
    g_setpoint: float
    b_plan: np.ndarray  # injection sign, advisory only
    iterations: int
    accuracy: float
    converged: bool
    state: AdmmState
    trace: list[IterationRecord] = field(default_factory=list)
    soc_margin: float = 0.0

    @property
    def rho(self) -> float:
        return self.state.rho


def residuals(state: AdmmState, prev_gc, prev_bc) -> tuple[float, float]:
    """Primal residual (sum of the two consensus gaps) and dual residual."""
    r = float(np.linalg.norm(state.g - state.gc) + np.linalg.norm(state.b - state.bc))
    dc = np.concatenate([state.bc - prev_bc, state.gc - prev_gc])
    s = float(np.linalg.norm(-state.rho * dc))
    return r, s


def stopping_tolerances(state: AdmmState, cfg: AdmmConfig) -> tuple[float, float]:
    p = 2 * state.size
    root = np.sqrt(p) * cfg.eps_abs
    x_norm = np.hypot(np.linalg.norm(state.g), np.linalg.norm(state.b))
    z_norm = np.hypot(np.linalg.norm(state.gc), np.linalg.norm(state.bc))
    y_norm = state.rho * np.hypot(np.linalg.norm(state.ug), np.linalg.norm(state.ub))
    return float(root + cfg.eps_rel * max(x_norm, z_norm)), float(root + cfg.eps_rel * y_norm)


def adapt_rho(rho: float, r_norm: float, s_norm: float, cfg: AdmmConfig,
              state: AdmmState | None = None) -> float:
    """Residual balancing. Rescales ``state``'s scaled duals in place so
    that the unscaled multipliers ``rho * u`` are unchanged."""
    if not rho > 0:
        raise ValueError("penalty must be positive")
    if r_norm > cfg.mu * s_norm:
        new = rho * cfg.tau_incr
    elif s_norm > cfg.mu * r_norm:
        new = rho / cfg.tau_decr
    else:
        new = rho
    if state is not None:
        if new != rho:
            scale = rho / new
            state.ug *= scale
            state.ub *= scale
        state.rho = new
    return new


def soc_chain_bounds(battery: BatteryModel, start: int, n: int, margin: float = 0.0):
    """Prefix-sum bounds on injection-sign battery power for slots ``start..start+n-1``.

    The SOC at the end of slot j must lie within the bounds of slot j and
    of slot j+1 (the last slot reuses its own bounds).
    """
    lo = battery.soc_min[start:start + n]
    hi = battery.soc_max[start:start + n]
    nxt = np.minimum(np.arange(start + 1, start + n + 1), battery.soc_min.size - 1)
    lo = np.maximum(lo, battery.soc_min[nxt])
    hi = np.minimum(hi, battery.soc_max[nxt])
    if margin > 0:
        m = np.minimum(margin, np.maximum(hi - lo, 0.0) / 2)
        lo, hi = lo + m, hi - m
    alpha = battery.alpha
    return (battery.soc - hi) / alpha, (battery.soc - lo) / alpha


def build_bess_qp(battery: BatteryModel, n: int, cfg: AdmmConfig, target=None,
                  margin: float | None = None) -> BoxChainQp:
    start = battery.soc_min.size - n
    if start < 0:
        raise ValueError(f"horizon {n} longer than the battery's bound profile")
    margin = cfg.soc_margin if margin is None else margin
    chain_lo, chain_hi = soc_chain_bounds(battery, start, n, margin)
    gap = np.flatnonzero(chain_lo > chain_hi)
    if gap.size:
        j = start + int(gap[0])
        raise InfeasibleSet(f"SOC bounds of slots {j} and {j + 1} do not overlap")
    return BoxChainQp(
        target=np.zeros(n) if target is None else target,
        lo=np.full(n, -battery.p_max_kw),
        hi=np.full(n, -battery.p_min_kw),
        chain_lo=chain_lo,
        chain_hi=chain_hi,
        tol=cfg.bess_tol,
    )


def coupling_feasible(qp: BoxChainQp, e_hat, g_hat) -> bool:
    """Whether some battery plan meets its own bounds and ``e_hat - g_hat <= b <= e_hat``."""
    lo = np.maximum(qp.lo, np.asarray(e_hat) - np.asarray(g_hat))
    hi = np.minimum(qp.hi, e_hat)
    if np.any(lo > hi + qp.tol):
        return False
    r_lo, r_hi = reachable_prefix_sums(lo, hi, qp.chain_lo, qp.chain_hi)
    return bool(np.all(r_lo <= r_hi + qp.tol))


def usable_margin(battery: BatteryModel, e_hat, g_hat, cfg: AdmmConfig, steps: int = 20) -> float:
    """Largest SOC back-off up to ``cfg.soc_margin`` that keeps the coupled problem feasible."""
    n = len(e_hat)
    if cfg.soc_margin == 0 or coupling_feasible(build_bess_qp(battery, n, cfg), e_hat, g_hat):
        return cfg.soc_margin
    lo, hi = 0.0, cfg.soc_margin
    if not coupling_feasible(build_bess_qp(battery, n, cfg, margin=0.0), e_hat, g_hat):
        return 0.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if coupling_feasible(build_bess_qp(battery, n, cfg, margin=mid), e_hat, g_hat):
            lo = mid
        else:
            hi = mid
    return lo


def cold_start(e_hat: np.ndarray, g_hat: np.ndarray, rho0: float) -> AdmmState:
    g = g_hat.copy()
    b = np.zeros_like(g)
    gc, bc = consensus_update(g, b, e_hat)
    zeros = np.zeros_like(g)
    return AdmmState(g=g, b=b, gc=gc, bc=bc, ug=zeros.copy(), ub=zeros.copy(), rho=rho0)


def admm_iteration(state: AdmmState, e: np.ndarray, g_hat: np.ndarray, qp: BoxChainQp):
    """One pass of original, copied and dual updates, in place.

    Returns the previous copied variables (needed by the dual residual).
    """
    rho = state.rho
    prev_gc, prev_bc = state.gc, state.bc
    # the two resource updates are independent of each other
    state.g = pv_update(g_hat, prev_gc - state.ug, rho)
    state.b = _project_box_chain(prev_bc - state.ub, qp.lo, qp.hi, qp.chain_lo, qp.chain_hi)
    state.gc, state.bc = consensus_update(state.g + state.ug, state.b + state.ub, e)
    state.ug = state.ug + state.g - state.gc
    state.ub = state.ub + state.b - state.bc
    return prev_gc, prev_bc


def solve_coordination(e_hat, g_hat, battery: BatteryModel, cfg: AdmmConfig | None = None,
                       warm: AdmmState | None = None) -> CoordinationResult:
    """Run the consensus ADMM over the remaining horizon.

    ``e_hat`` and ``g_hat`` cover slots ``i..N-1``; the slot index ``i`` is
    inferred from the length of the battery's bound profile. Stops on the
    residual test or at ``cfg.max_iter``; in the latter case the iterate with
    the smallest primal residual is returned with ``converged=False``.
    """
    cfg = cfg or AdmmConfig()
    e = np.asarray(e_hat.e_hat if isinstance(e_hat, ErrorForecast) else e_hat, dtype=float)
    gh = np.asarray(g_hat.g_hat if isinstance(g_hat, PvForecast) else g_hat, dtype=float)
    n = e.size
    if n < 1 or gh.size != n:
        raise ValueError("e_hat and g_hat must share a horizon of length >= 1")
    if np.any(gh < 0):
        raise ValueError("PV forecast must be non-negative")

    margin = usable_margin(battery, e, gh, cfg)
    if margin < cfg.soc_margin:
        log.info("SOC back-off reduced from %.4g to %.4g", cfg.soc_margin, margin)
    qp = build_bess_qp(battery, n, cfg, margin=margin)
    check_feasible(qp)

    if warm is not None and warm.size == n:
        state = warm.copy()
    else:
        state = cold_start(e, gh, cfg.rho0)

    trace: list[IterationRecord] = []
    best: AdmmState | None = None
    converged = False
    for k in range(1, int(cfg.max_iter) + 1):
        rho = state.rho
        prev_gc, prev_bc = admm_iteration(state, e, gh, qp)
        state.k = k
        state.r_norm, state.s_norm = residuals(state, prev_gc, prev_bc)
        eps_pri, eps_dual = stopping_tolerances(state, cfg)
        trace.append(IterationRecord(k, state.r_norm, state.s_norm, rho, eps_pri, eps_dual))
        if best is None or state.r_norm < best.r_norm:
            best = state.copy()
        if state.r_norm <= eps_pri and state.s_norm <= eps_dual:
            converged = True
            break
        adapt_rho(rho, state.r_norm, state.s_norm, cfg, state)

    if not converged:
        log.info("ADMM stopped at max_iter=%d with r=%.4g s=%.4g",
                 cfg.max_iter, state.r_norm, state.s_norm)
        final = best.copy()
        final.k = state.k
        # keep the latest penalty and multipliers for warm starting
        final.rho, final.ug, final.ub = state.rho, state.ug.copy(), state.ub.copy()
        out = best
    else:
        final = state
        out = state

    return CoordinationResult(
        g_setpoint=float(np.clip(out.gc[0], 0.0, gh[0])),
        b_plan=out.b.copy(),
        iterations=state.k,
        accuracy=float(np.max(np.abs(out.g + out.b - e))),
        converged=converged,
        state=final,
        trace=trace,
        soc_margin=margin,
    )
