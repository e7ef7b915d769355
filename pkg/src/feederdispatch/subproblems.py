"""Per-iteration minimizations of the PV/battery consensus ADMM.

The battery update is a Euclidean projection onto

    lo[j] <= x[j] <= hi[j],    chain_lo[j] <= x[0] + ... + x[j] <= chain_hi[j]

solved exactly by a forward/backward dynamic program over the prefix sum
``s[j]``. For every stage the inverse subgradient of the optimal
cost-to-reach, ``s = M_j(g)``, is a continuous nondecreasing piecewise-linear
map of the slope ``g``. It obeys

    M_j(g) = clip(M_{j-1}(g) + clip(t[j] + g, lo[j], hi[j]), chain_lo[j], chain_hi[j])

with ``M_{-1} == 0``. The optimal final prefix sum is ``M_{n-1}(0)``; walking
back, the slope that reproduces each ``s[j]`` fixes ``x[j] = clip(t[j] + g)``.
Cost is O(n * k) where k is the number of breakpoints (k <= 4n + 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class InfeasibleSet(ValueError):
    """Box and chain constraints admit no common point."""


@dataclass(frozen=True)
class BoxChainQp:
    """Projection of ``target`` onto box and prefix-sum (chain) bounds."""

    target: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    chain_lo: np.ndarray
    chain_hi: np.ndarray
    tol: float = 1e-6

    def __post_init__(self):
        arrays = {}
        for name in ("target", "lo", "hi", "chain_lo", "chain_hi"):
            arrays[name] = np.ascontiguousarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arrays[name])
        n = arrays["target"].size
        if n < 1 or any(a.shape != (n,) for a in arrays.values()):
            raise ValueError("all BoxChainQp arrays must be 1-D with equal length >= 1")
        if not np.all(np.isfinite(arrays["target"])):
            raise ValueError("target must be finite")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("box bounds must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("box bounds must satisfy lo <= hi")
        if np.any(np.isnan(self.chain_lo)) or np.any(np.isnan(self.chain_hi)):
            raise ValueError("chain bounds must not be NaN")
        if np.any(self.chain_lo > self.chain_hi):
            raise ValueError("chain bounds must satisfy chain_lo <= chain_hi")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    @property
    def size(self) -> int:
        return self.target.size


def reachable_prefix_sums(lo, hi, chain_lo, chain_hi):
    """Interval of attainable prefix sums at every stage (greedy forward clipping).

    Returns ``(r_lo, r_hi)``; the feasible set is empty iff some
    ``r_lo[j] > r_hi[j]``.
    """
    n = len(lo)
    r_lo = np.empty(n)
    r_hi = np.empty(n)
    a = b = 0.0
    for j in range(n):
        a = max(chain_lo[j], a + lo[j])
        b = min(chain_hi[j], b + hi[j])
        r_lo[j] = a
        r_hi[j] = b
    return r_lo, r_hi


def check_feasible(qp: BoxChainQp) -> None:
    r_lo, r_hi = reachable_prefix_sums(qp.lo, qp.hi, qp.chain_lo, qp.chain_hi)
    gap = r_lo - r_hi
    bad = np.flatnonzero(gap > qp.tol)
    if bad.size:
        j = int(bad[0])
        raise InfeasibleSet(
            f"no battery trajectory satisfies the bounds at horizon step {j}: "
            f"reachable prefix sum interval is [{r_lo[j]:.6g}, {r_hi[j]:.6g}]"
        )


@numba.njit(cache=True)
def _eval_map(gs, vs, k, g):
    if g <= gs[0]:
        return vs[0]
    if g >= gs[k - 1]:
        return vs[k - 1]
    lo_i = 0
    hi_i = k - 1
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if gs[mid] <= g:
            lo_i = mid
        else:
            hi_i = mid
    w = (g - gs[lo_i]) / (gs[hi_i] - gs[lo_i])
    return vs[lo_i] + w * (vs[hi_i] - vs[lo_i])


@numba.njit(cache=True)
def _invert_map(gs, vs, k, s):
    # any slope in a flat stretch of the map yields the same split
    if s <= vs[0]:
        return gs[0]
    if s >= vs[k - 1]:
        return gs[k - 1]
    lo_i = 0
    hi_i = k - 1
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if vs[mid] < s:
            lo_i = mid
        else:
            hi_i = mid
    dv = vs[hi_i] - vs[lo_i]
    if dv <= 0.0:
        return gs[hi_i]
    return gs[lo_i] + (s - vs[lo_i]) / dv * (gs[hi_i] - gs[lo_i])


@numba.njit(cache=True)
def _project_box_chain(t, lo, hi, clo, chi):
    n = t.size
    cap = 4 * n + 8
    cur_g = np.empty(cap)
    cur_v = np.empty(cap)
    nxt_g = np.empty(cap)
    nxt_v = np.empty(cap)
    cur_g[0] = 0.0
    cur_v[0] = 0.0
    k = 1
    # unclamped maps of every stage, stored back to back
    store_g = np.empty(n * (cap // 2 + 2) + cap)
    store_v = np.empty(store_g.size)
    offset = np.zeros(n + 1, dtype=np.int64)

    for j in range(n):
        b1 = lo[j] - t[j]
        b2 = hi[j] - t[j]
        # merge the two kinks of clip(t + g) into the breakpoint list
        m = 0
        i = 0
        ins = 0
        extra0 = b1
        extra1 = b2
        n_extra = 1 if b2 == b1 else 2
        while i < k or ins < n_extra:
            if ins < n_extra:
                e = extra0 if ins == 0 else extra1
            else:
                e = np.inf
            if i < k and cur_g[i] <= e:
                gval = cur_g[i]
                vval = cur_v[i]
                i += 1
                if ins < n_extra and gval == e:
                    ins += 1
            else:
                gval = e
                vval = _eval_map(cur_g, cur_v, k, e)
                ins += 1
            c = t[j] + gval
            if c < lo[j]:
                c = lo[j]
            elif c > hi[j]:
                c = hi[j]
            nxt_g[m] = gval
            nxt_v[m] = vval + c
            m += 1

        base = offset[j]
        for q in range(m):
            store_g[base + q] = nxt_g[q]
            store_v[base + q] = nxt_v[q]
        offset[j + 1] = base + m

        # clamp to the chain bounds, inserting crossing points
        a = clo[j]
        b = chi[j]
        k = 0
        for q in range(m):
            if q > 0:
                g0 = nxt_g[q - 1]
                v0 = nxt_v[q - 1]
                g1 = nxt_g[q]
                v1 = nxt_v[q]
                if v0 < a < v1:
                    cur_g[k] = g0 + (a - v0) / (v1 - v0) * (g1 - g0)
                    cur_v[k] = a
                    k += 1
                if v0 < b < v1:
                    cur_g[k] = g0 + (b - v0) / (v1 - v0) * (g1 - g0)
                    cur_v[k] = b
                    k += 1
            v = nxt_v[q]
            if v < a:
                v = a
            elif v > b:
                v = b
            cur_g[k] = nxt_g[q]
            cur_v[k] = v
            k += 1
        # drop interior points of flat runs
        w = 0
        for q in range(k):
            if 0 < q < k - 1 and cur_v[q - 1] == cur_v[q] and cur_v[q] == cur_v[q + 1]:
                continue
            if w > 0 and cur_g[q] == cur_g[w - 1]:
                continue
            cur_g[w] = cur_g[q]
            cur_v[w] = cur_v[q]
            w += 1
        k = w

    x = np.empty(n)
    s = _eval_map(cur_g, cur_v, k, 0.0)
    for j in range(n - 1, -1, -1):
        base = offset[j]
        m = offset[j + 1] - base
        g = _invert_map(store_g[base:base + m], store_v[base:base + m], m, s)
        c = t[j] + g
        if c < lo[j]:
            c = lo[j]
        elif c > hi[j]:
            c = hi[j]
        x[j] = c
        s -= c
    return x


def pv_update(g_hat, z, rho: float) -> np.ndarray:
    """Minimize ``sum (G - g_hat)^2 + rho/2 ||G - z||^2`` over ``0 <= G <= g_hat``."""
    if not rho > 0:
        raise ValueError(f"penalty must be positive, got {rho!r}")
    g_hat = np.asarray(g_hat, dtype=float)
    z = np.asarray(z, dtype=float)
    unconstrained = (2.0 * g_hat + rho * z) / (2.0 + rho)
    return np.clip(unconstrained, 0.0, g_hat)


def bess_update(qp: BoxChainQp) -> np.ndarray:
    """Euclidean projection of ``qp.target`` onto the box and chain constraints.

    Raises :class:`InfeasibleSet` when the constraint set is empty.
    """
    check_feasible(qp)
    return _project_box_chain(qp.target, qp.lo, qp.hi, qp.chain_lo, qp.chain_hi)


def consensus_update(a, b, e):
    """Closest pair ``(gc, bc)`` to ``(a, b)`` with ``gc + bc == e`` slot by slot."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    e = np.asarray(e, dtype=float)
    if not a.shape == b.shape == e.shape:
        raise ValueError("consensus_update needs equal-length sequences")
    delta = 0.5 * (e - a - b)
    gc = a + delta
    # bc from the constraint keeps gc + bc == e up to one rounding
    bc = e - gc
    return gc, bc
