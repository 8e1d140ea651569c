"""Event-driven simulation of the weakly asymmetric zero-range process.

Particles on the discrete torus {0, ..., N-1} leave site x at rate
``N^2 g(eta_x)`` to the left and ``N^2 (1 + gamma N^-beta) g(eta_x)`` to
the right. Time is macroscopic: the N^2 speed-up is part of the rates.

Event selection uses a binary indexed tree over ``g(eta_x)``; the hot loop
is compiled with numba and consumes uniforms from a buffer filled by a
:class:`numpy.random.Generator`, so a run is a pure function of the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import EmptySystem, RateTableOverflow
from .fenwick import FenwickTree, fw_add, fw_prefix, fw_search
from .rates import RateFunction

# status codes returned by the kernels
_DONE, _NEED_UNIFORMS, _LOG_FULL, _EMPTY, _OVERFLOW = range(5)

_CHUNK = 1 << 16


@dataclass(frozen=True)
class ModelParams:
    N: int
    gamma: float = 0.0
    beta: float = 0.5
    rho: float = 1.0
    rate: RateFunction = field(default_factory=RateFunction.constant)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.beta < 0.5:
            raise ValueError("beta must be >= 1/2")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")

    @property
    def asymmetry(self):
        """gamma N^-beta, the extra relative rate of right jumps."""
        return self.gamma * self.N ** (-self.beta)

    @property
    def right_factor(self):
        return self.N ** 2 * (1.0 + self.asymmetry)

    @property
    def left_factor(self):
        return float(self.N ** 2)

    @property
    def rate_scale(self):
        """Total rate per unit of g: N^2 (2 + gamma N^-beta)."""
        return self.N ** 2 * (2.0 + self.asymmetry)

    @property
    def p_right(self):
        return (1.0 + self.asymmetry) / (2.0 + self.asymmetry)

    @property
    def frame_speed_factor(self):
        """gamma N^(1-beta); multiply by c'_rho for the frame velocity."""
        return self.gamma * self.N ** (1.0 - self.beta)

    def header(self):
        return (f"N={self.N} gamma={self.gamma!r} beta={self.beta!r} "
                f"rho={self.rho!r} rate={self.rate.describe()}")


class Configuration:
    """Occupancies on the torus with a prefix-summable rate index.

    Besides ``eta`` the configuration carries the macroscopic ``time`` and
    the net particle ``flux`` across the periodic boundary (leftward
    crossings 0 -> N-1 count +1), which the height function needs.
    """

    def __init__(self, eta, rate=None, time=0.0, flux=0):
        self.eta = np.array(eta, dtype=np.int64)
        if self.eta.ndim != 1 or np.any(self.eta < 0):
            raise ValueError("eta must be a vector of non-negative integers")
        self.rate = rate if rate is not None else RateFunction.constant()
        self.total = int(self.eta.sum())
        self.time = float(time)
        self.flux = int(flux)
        K = self.total if self.rate.kind != "table" else min(self.total, self.rate.k_max)
        if self.eta.max(initial=0) > self.rate.k_max:
            raise RateTableOverflow(
                f"occupancy {self.eta.max()} beyond rate table (k_max={self.rate.k_max})")
        self.gtab = self.rate.table_upto(max(K, 1))
        self.rate_index = FenwickTree(self.gtab[self.eta])

    @property
    def N(self):
        return self.eta.shape[0]

    def copy(self):
        return Configuration(self.eta, self.rate, self.time, self.flux)

    def rate_sum(self):
        return self.rate_index.total

    def check(self):
        """Assert the cached total and the rate index match ``eta``."""
        assert self.total == int(self.eta.sum())
        assert np.array_equal(self.rate_index.values, self.gtab[self.eta])
        exact = float(np.sum(self.gtab[self.eta]))
        if self.rate.integer_valued:
            assert self.rate_index.total == exact
        else:
            assert abs(self.rate_index.total - exact) <= 1e-12 * max(1.0, exact)

    def __repr__(self):
        return f"Configuration(N={self.N}, total={self.total}, time={self.time:g}, flux={self.flux})"


@dataclass(frozen=True)
class JumpEvent:
    """One jump. ``crossed_boundary`` is +1 for 0 -> N-1, -1 for N-1 -> 0."""

    time: float
    from_site: int
    to_site: int
    crossed_boundary: int = 0

    @property
    def rightward(self):
        return self.crossed_boundary == -1 or self.to_site == self.from_site + 1


@dataclass
class EventLog:
    """Columnar event record, as produced by :func:`run_until`."""

    time: np.ndarray
    from_site: np.ndarray
    to_site: np.ndarray
    flag: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64),
                   np.zeros(0, np.int64))

    @classmethod
    def concat(cls, logs):
        logs = list(logs)
        if not logs:
            return cls.empty()
        return cls(*(np.concatenate([getattr(l, f) for l in logs])
                     for f in ("time", "from_site", "to_site", "flag")))

    def __len__(self):
        return self.time.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield JumpEvent(float(self.time[i]), int(self.from_site[i]),
                            int(self.to_site[i]), int(self.flag[i]))

    def __eq__(self, other):
        return (isinstance(other, EventLog)
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("time", "from_site", "to_site", "flag")))


@dataclass
class RunStats:
    n_events: int
    time: float
    events: EventLog | None = None


@njit(cache=True)
def _zrp_kernel(eta, values, tree, gtab, p_right, rate_scale, t, t_end, flux,
                uni, upos, max_events, log_t, log_from, log_to, log_flag):
    N = eta.shape[0]
    logging = log_t.shape[0] > 0
    nev = 0
    status = _DONE
    while True:
        if nev >= max_events:
            status = _LOG_FULL
            break
        if upos + 3 > uni.shape[0]:
            status = _NEED_UNIFORMS
            break
        G = fw_prefix(tree, N)
        if G <= 0.0:
            status = _EMPTY
            break
        R = rate_scale * G
        u0 = uni[upos]
        u1 = uni[upos + 1]
        u2 = uni[upos + 2]
        upos += 3
        dt = -math.log1p(-u0) / R
        if t + dt > t_end:
            t = t_end
            status = _DONE
            break
        x = fw_search(tree, u1 * G)
        if x >= N:
            x = N - 1
            while values[x] <= 0.0:
                x -= 1
        flag = 0
        if u2 < p_right:
            y = x + 1
            if y == N:
                y = 0
                flag = -1
        else:
            y = x - 1
            if y < 0:
                y = N - 1
                flag = 1
        if eta[y] + 1 >= gtab.shape[0]:
            upos -= 3
            status = _OVERFLOW
            break
        t += dt
        eta[x] -= 1
        eta[y] += 1
        gx = gtab[eta[x]]
        gy = gtab[eta[y]]
        fw_add(tree, x, gx - values[x])
        fw_add(tree, y, gy - values[y])
        values[x] = gx
        values[y] = gy
        flux += flag
        if logging:
            log_t[nev] = t
            log_from[nev] = x
            log_to[nev] = y
            log_flag[nev] = flag
        nev += 1
    return t, flux, upos, nev, status


def total_jump_rate(config, params):
    """Sum of all generator rates, N^2 (2 + gamma N^-beta) sum_x g(eta_x)."""
    if config.N != params.N:
        raise ValueError(f"configuration has N={config.N}, params N={params.N}")
    return params.rate_scale * config.rate_sum()


def _advance(config, params, t_end, rng, max_events, record, expected=None):
    """Run the kernel until ``t_end`` or ``max_events``; returns (n, log, status)."""
    idx = config.rate_index
    if record:
        buf = np.zeros(max_events), *(np.zeros(max_events, np.int64) for _ in range(3))
    else:
        buf = (np.zeros(0),) + tuple(np.zeros(0, np.int64) for _ in range(3))
    n_total = 0
    while True:
        remaining = max_events - n_total
        if expected is None:
            est = total_jump_rate(config, params) * max(t_end - config.time, 0.0)
            est = est if math.isfinite(est) else remaining
        else:
            est = expected
        n_uni = 3 * int(min(remaining, max(16, est * 1.05 + 64), _CHUNK))
        uni = rng.random(n_uni)
        if record:
            views = tuple(b[n_total:] for b in buf)
        else:
            views = buf
        t, flux, _, nev, status = _zrp_kernel(
            config.eta, idx.values, idx.tree, config.gtab, params.p_right,
            params.rate_scale, config.time, t_end, config.flux, uni, 0,
            remaining, *views)
        config.time = t
        config.flux = flux
        n_total += nev
        expected = None
        if not config.rate.integer_valued:
            idx.rebuild()
        if status == _OVERFLOW:
            raise RateTableOverflow(
                f"occupancy would exceed the rate table (k_max={config.rate.k_max})")
        if status == _NEED_UNIFORMS:
            continue
        log = None
        if record:
            log = EventLog(*(b[:n_total].copy() for b in buf))
        return n_total, log, status


def step(config, params, rng):
    """Apply one jump of the generator in place and return it."""
    if config.rate_sum() <= 0:
        raise EmptySystem("total jump rate is zero")
    n, log, status = _advance(config, params, math.inf, rng, 1, True, expected=1)
    return next(iter(log))


def run_until(config, params, T, rng, observers=(), record=False, chunk=_CHUNK):
    """Advance ``config`` in place until macroscopic time ``T``.

    Observers receive every event, in order, through
    ``observer.on_events(log, config)`` after each chunk of at most
    ``chunk`` events; ``config`` then reflects the state after the last
    event of the chunk. An observer with ``requires_events = True`` makes
    an empty system an error.
    """
    if T < config.time:
        raise ValueError(f"T={T} is before the current time {config.time}")
    if config.N != params.N:
        raise ValueError(f"configuration has N={config.N}, params N={params.N}")
    if config.rate_sum() <= 0:
        if any(getattr(o, "requires_events", False) for o in observers):
            raise EmptySystem("observers require events but the system is empty")
        config.time = float(T)
        return RunStats(0, config.time, EventLog.empty() if record else None)
    observers = list(observers)
    need_log = record or bool(observers)
    logs = []
    n_events = 0
    while True:
        n, log, status = _advance(config, params, T, rng,
                                  chunk if need_log else 1 << 62, need_log)
        n_events += n
        if log is not None:
            for obs in observers:
                obs.on_events(log, config)
            if record:
                logs.append(log)
        if status in (_DONE, _EMPTY):
            break
    if status == _EMPTY:
        config.time = float(T)
    return RunStats(n_events, config.time, EventLog.concat(logs) if record else None)


def seeded_rng(seed, *counter):
    """Generator for stream ``counter`` under master ``seed``.

    Streams are ``SeedSequence(seed, spawn_key=counter)``, so replica ``i``
    gets the same numbers regardless of how replicas are spread over
    workers.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counter)))


def write_event_log(path, log, params, seed):
    with open(path, "w") as fh:
        fh.write(f"# {params.header()} seed={seed}\n")
        fh.write("time,from,to,boundary\n")
        for t, a, b, f in zip(log.time, log.from_site, log.to_site, log.flag):
            fh.write(f"{float(t)!r},{a},{b},{f}\n")


def read_event_log(path):
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    if data.size == 0:
        return EventLog.empty()
    return EventLog(data[:, 0].copy(), data[:, 1].astype(np.int64),
                    data[:, 2].astype(np.int64), data[:, 3].astype(np.int64))


def write_configuration(path, config, params, seed):
    with open(path, "w") as fh:
        fh.write(f"# {params.header()} seed={seed} time={config.time!r} flux={config.flux}\n")
        fh.write("x,eta\n")
        for x, n in enumerate(config.eta):
            fh.write(f"{x},{n}\n")


def read_configuration(path, rate=None):
    with open(path) as fh:
        header = fh.readline()
    meta = dict(tok.split("=", 1) for tok in header[1:].split() if "=" in tok)
    data = np.loadtxt(path, delimiter=",", skiprows=2, dtype=np.int64, ndmin=2)
    if rate is None and "rate" in meta:
        rate = RateFunction.parse(meta["rate"])
    return Configuration(data[:, 1], rate, float(meta.get("time", 0.0)),
                         int(meta.get("flux", 0)))
