"""Basic coupling of M zero-range replicas driven by one event stream.

A site is drawn with probability proportional to the dominating rate
``r(x) = max_m g(eta^m_x)``, a direction with the generator's ratio, and a
mark ``u``; replica m performs the jump iff ``u r(x) <= g(eta^m_x)``. Each
replica thus jumps from x at exactly its own rate, and replicas with equal
occupancy at x move together. Heights of all replicas are tracked as
integers so order and sandwich constraints can be checked after every
selection.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import AllEmpty, RateTableOverflow, SandwichViolated
from .fenwick import fw_add, fw_build, fw_prefix, fw_search
from .heights import HeightField, field_by_sbp, height_from_config

_DONE, _NEED_UNIFORMS, _LIMIT, _EMPTY, _OVERFLOW = range(5)
_CHUNK = 1 << 16


@dataclass(eq=False)
class CoupledState:
    """Replicas on one torus with integer heights and a sandwich slack.

    ``heights[m]`` holds ``sum_{y<x} eta^m_y + flux^m`` for the cuts
    x = 0..N. ``bounds[m]`` is the allowed integer distance
    ``kappa eps_m sqrt(N)`` between replica m >= 1 and replica 0.
    """

    eta: np.ndarray
    params: object
    kappa: float = 1.0
    epsilons: np.ndarray | None = None
    time: float = 0.0
    heights: np.ndarray = field(init=False, repr=False)
    gtab: np.ndarray = field(init=False, repr=False)
    rmax: np.ndarray = field(init=False, repr=False)
    tree: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.eta = np.array(self.eta, dtype=np.int64)
        if self.eta.ndim != 2 or self.eta.shape[1] != self.params.N:
            raise ValueError("eta must have shape (M, N)")
        M, N = self.eta.shape
        self.heights = np.zeros((M, N + 1), dtype=np.int64)
        np.cumsum(self.eta, axis=1, out=self.heights[:, 1:])
        top = int(self.eta.sum(axis=1).max(initial=1))
        rate = self.params.rate
        if rate.kind == "table":
            top = min(top, rate.k_max)
        self.gtab = rate.table_upto(max(top, 1))
        self.rmax = self.gtab[self.eta].max(axis=0)
        self.tree = fw_build(self.rmax)
        if self.epsilons is None:
            self.epsilons = np.zeros(M)
        self.epsilons = np.broadcast_to(np.asarray(self.epsilons, dtype=float), (M,)).copy()

    @classmethod
    def from_configs(cls, configs, params, kappa=1.0, epsilons=None):
        return cls(np.stack([c.eta for c in configs]), params, kappa, epsilons)

    @property
    def M(self):
        return self.eta.shape[0]

    @property
    def N(self):
        return self.eta.shape[1]

    @property
    def bounds(self):
        return self.kappa * self.epsilons * math.sqrt(self.N)

    def height(self, m):
        return HeightField(self.heights[m].copy(), self.params.rho, self.time)

    def max_height_gap(self, m=1):
        """max over torus sites x = 0..N-1 of |h^m_x - h^0_x|, integer units."""
        return int(np.max(np.abs(self.heights[m, :-1] - self.heights[0, :-1])))

    def check_consistency(self):
        S = np.zeros_like(self.heights)
        np.cumsum(self.eta, axis=1, out=S[:, 1:])
        flux = self.heights[:, :1]
        assert np.array_equal(self.heights, S + flux)
        assert np.array_equal(self.rmax, self.gtab[self.eta].max(axis=0))


@dataclass
class CoupledStats:
    selections: int = 0
    jumps: np.ndarray | None = None
    sandwich_violations: int = 0
    order_violations: int = 0
    first_violation: tuple | None = None
    max_gap: np.ndarray | None = None
    events: dict | None = None


@njit(cache=True)
def _coupled_kernel(eta, heights, rmax, tree, gtab, p_right, rate_scale, t, t_end,
                    uni, max_sel, bounds, order_pairs, max_gap, stop_on_violation,
                    log_site, log_dir, log_jumped, log_t, viol):
    M, N = eta.shape
    logging = log_site.shape[0] > 0
    nsel = 0
    n_sand = 0
    n_order = 0
    upos = 0
    status = _DONE
    while True:
        if nsel >= max_sel:
            status = _LIMIT
            break
        if upos + 4 > uni.shape[0]:
            status = _NEED_UNIFORMS
            break
        G = fw_prefix(tree, N)
        if G <= 0.0:
            status = _EMPTY
            break
        u0 = uni[upos]
        u1 = uni[upos + 1]
        u2 = uni[upos + 2]
        mark = uni[upos + 3]
        upos += 4
        dt = -math.log1p(-u0) / (rate_scale * G)
        if t + dt > t_end:
            t = t_end
            break
        x = fw_search(tree, u1 * G)
        if x >= N:
            x = N - 1
            while rmax[x] <= 0.0:
                x -= 1
        right = u2 < p_right
        if right:
            y = x + 1 if x + 1 < N else 0
        else:
            y = x - 1 if x > 0 else N - 1
        thresh = mark * rmax[x]
        overflow = False
        for m in range(M):
            gm = gtab[eta[m, x]]
            if gm > 0.0 and thresh <= gm and eta[m, y] + 1 >= gtab.shape[0]:
                overflow = True
        if overflow:
            status = _OVERFLOW
            break
        t += dt
        jumped_mask = 0
        for m in range(M):
            gm = gtab[eta[m, x]]
            if gm > 0.0 and thresh <= gm:
                eta[m, x] -= 1
                eta[m, y] += 1
                if m < 62:
                    jumped_mask |= 1 << m
                if right:
                    if x == N - 1:
                        heights[m, 0] -= 1
                        heights[m, N] -= 1
                    else:
                        heights[m, x + 1] -= 1
                else:
                    if x == 0:
                        heights[m, 0] += 1
                        heights[m, N] += 1
                    else:
                        heights[m, x] += 1
        # dominating rates at the two touched sites
        for s in (x, y):
            r = 0.0
            for m in range(M):
                gm = gtab[eta[m, s]]
                if gm > r:
                    r = gm
            fw_add(tree, s, r - rmax[s])
            rmax[s] = r
        # the cut that moved, on the torus domain x = 0..N-1 (cut N is the
        # total count, not a lattice site of the height function)
        c = x + 1 if right else x
        if c == N:
            c = 0
        violated = False
        for m in range(1, M):
            if bounds[m] >= 0.0:
                d = heights[m, c] - heights[0, c]
                if d < 0:
                    d = -d
                if d > max_gap[m]:
                    max_gap[m] = d
                if d > bounds[m]:
                    if n_sand == 0:
                        viol[0] = nsel
                        viol[1] = c
                        viol[2] = m
                        viol[3] = d
                    n_sand += 1
                    violated = True
        for p in range(order_pairs.shape[0]):
            a = order_pairs[p, 0]
            b = order_pairs[p, 1]
            if eta[a, x] > eta[b, x] or eta[a, y] > eta[b, y]:
                n_order += 1
                violated = True
        if logging:
            log_site[nsel] = x
            log_dir[nsel] = 1 if right else -1
            log_jumped[nsel] = jumped_mask
            log_t[nsel] = t
        nsel += 1
        if violated and stop_on_violation:
            status = _LIMIT
            break
    return t, upos, nsel, n_sand, n_order, status


def coupled_run(state, T, rng, order_pairs=(), check_sandwich=True,
                stop_on_violation=False, record=False, max_selections=None):
    """Advance all replicas to time ``T`` under the basic coupling.

    Every site selection (including ones where no replica jumps) is one
    coupled event; sandwich bounds against replica 0 and sitewise order for
    each ``(lower, upper)`` pair in ``order_pairs`` are checked after each.
    """
    p = state.params
    if state.rmax.sum() <= 0:
        raise AllEmpty("all replicas are empty")
    pairs = np.asarray(order_pairs, dtype=np.int64).reshape(-1, 2)
    bounds = state.bounds if check_sandwich else np.full(state.M, -1.0)
    if check_sandwich:
        bounds[0] = -1.0
    max_gap = np.zeros(state.M, dtype=np.int64)
    for m in range(1, state.M):
        max_gap[m] = state.max_height_gap(m)
    viol = np.full(4, -1, dtype=np.int64)
    stats = CoupledStats(jumps=None, max_gap=max_gap)
    logs = []
    limit = max_selections if max_selections is not None else 1 << 62
    while True:
        remaining = limit - stats.selections
        est = p.rate_scale * state.rmax.sum() * max(T - state.time, 0.0)
        n = int(min(remaining, max(16, est * 1.05 + 64), _CHUNK))
        uni = rng.random(4 * n)
        if record:
            logbuf = (np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n, np.int64), np.zeros(n))
        else:
            logbuf = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
        vchunk = np.full(4, -1, dtype=np.int64)
        t, _, nsel, n_sand, n_order, status = _coupled_kernel(
            state.eta, state.heights, state.rmax, state.tree, state.gtab, p.p_right,
            p.rate_scale, state.time, T, uni, min(n, remaining), bounds, pairs, max_gap,
            stop_on_violation, *logbuf, vchunk)
        state.time = t
        if n_sand and viol[0] < 0:
            viol[:] = vchunk
            viol[0] += stats.selections
        stats.selections += nsel
        stats.sandwich_violations += n_sand
        stats.order_violations += n_order
        if record:
            logs.append(tuple(b[:nsel] for b in logbuf))
        if status == _OVERFLOW:
            raise RateTableOverflow("occupancy would exceed the rate table")
        if status == _EMPTY:
            state.time = float(T)
            break
        if status == _DONE:
            break
        if status == _LIMIT and (stop_on_violation and (n_sand or n_order) or stats.selections >= limit):
            break
    if not np.all(state.gtab == np.round(state.gtab)):
        state.tree = fw_build(state.rmax)  # drop float drift from incremental updates
    if viol[0] >= 0:
        m = int(viol[2])
        slack = float(state.bounds[m] - viol[3]) / math.sqrt(state.N)
        stats.first_violation = (int(viol[0]), int(viol[1]), m, slack)
    stats.max_gap = max_gap
    if record:
        names = ("site", "direction", "jumped", "time")
        stats.events = {k: np.concatenate([l[i] for l in logs]) for i, k in enumerate(names)}
    return stats


def coupled_step(state, rng):
    """One coupled selection; returns the per-replica jumps as (from, to) or None."""
    before = state.eta.copy()
    stats = coupled_run(state, math.inf, rng, check_sandwich=False, record=True,
                        max_selections=1)
    x = int(stats.events["site"][0])
    d = int(stats.events["direction"][0])
    y = (x + d) % state.N
    out = []
    for m in range(state.M):
        moved = state.eta[m, x] != before[m, x]
        out.append((x, y) if moved else None)
    return out


@dataclass
class SandwichReport:
    violations: int
    selections: int
    first_violation: tuple | None
    max_gap: int
    required_kappa: float
    initial_gap: int


def check_height_sandwich(state, epsilon, T, rng, stop_on_violation=False):
    """Run the coupled pair to ``T`` asserting H^1 - k eps <= H^0 <= H^1 + k eps.

    Replica 0 is the reference, replica 1 the envelope replica. Raises
    :class:`SandwichViolated` if the initial data are not in the tube;
    violations during the run are counted and reported, not raised.
    """
    state.epsilons = np.full(state.M, float(epsilon))
    sqrtN = math.sqrt(state.N)
    init = state.max_height_gap(1)
    if init > epsilon * sqrtN * (1 + 1e-9) + 1e-12:
        raise SandwichViolated(
            f"initial height gap {init / sqrtN:.4g} exceeds eps={epsilon}", -1,
            int(np.argmax(np.abs(state.heights[1] - state.heights[0]))),
            epsilon - init / sqrtN)
    stats = coupled_run(state, T, rng, check_sandwich=True,
                        stop_on_violation=stop_on_violation)
    gap = int(stats.max_gap[1])
    return SandwichReport(stats.sandwich_violations, stats.selections,
                          stats.first_violation, gap,
                          gap / (epsilon * sqrtN) if epsilon > 0 else math.inf, init)


def field_distance(state, J, T=None, c_prime=0.0, pair=(0, 1)):
    """|Y^a - Y^b| for two replicas, both computed from heights by summation by parts."""
    T = state.time if T is None else T
    a, b = pair
    ya = field_by_sbp(state.height(a), J, T, state.params, c_prime).value
    yb = field_by_sbp(state.height(b), J, T, state.params, c_prime).value
    return abs(ya - yb)


def sbp_constant(J, N, shift=0.0):
    """C_J with |Y^a - Y^b| <= C_J sup_x |H^a_x - H^b_x|.

    Total variation of the lattice values of J plus twice sup |J| for the
    winding term of the summation by parts.
    """
    Jx = J.lattice(N, shift)
    Jext = np.append(Jx, Jx[0])
    return float(np.sum(np.abs(np.diff(Jext))) + 2 * np.max(np.abs(Jx)))


def enumerate_single_events(rate, N=3, max_occ=2):
    """Exhaustively apply every coupled single event to ordered pairs.

    For each pair eta^1 <= eta^2 (sitewise, occupancies <= max_occ), every
    site, both directions and every distinct outcome of the mark, yields
    the post-event pair. Returns the number of cases and the list of
    cases where the order was broken.
    """
    gtab = rate.table_upto(2 * N * max_occ + 1)
    states = list(itertools.product(range(max_occ + 1), repeat=N))
    cases = 0
    broken = []
    for lower in states:
        for upper in states:
            if any(a > b for a, b in zip(lower, upper)):
                continue
            for x in range(N):
                g = (gtab[lower[x]], gtab[upper[x]])
                r = max(g)
                if r <= 0:
                    continue
                cuts = sorted({v / r for v in g if v > 0} | {1.0})
                marks = [c * (1 - 1e-12) for c in cuts] + [c * (1 + 1e-12) for c in cuts if c < 1]
                for d in (1, -1):
                    y = (x + d) % N
                    for u in marks:
                        new = []
                        for eta, gm in ((list(lower), g[0]), (list(upper), g[1])):
                            if gm > 0 and u * r <= gm:
                                eta[x] -= 1
                                eta[y] += 1
                            new.append(eta)
                        cases += 1
                        if any(a > b for a, b in zip(*new)):
                            broken.append((lower, upper, x, d, u))
    return cases, broken
