"""Brownian envelopes: product measures conditioned on a height tube.

Under nu_alpha the unscaled prefix sums ``S_n = sum_{x<n} eta_x`` form a
random walk with i.i.d. increments drawn from the site marginal. The tube
event ``sup_n |H_n - target(n/N)| <= eps`` becomes a window
``lo_n <= S_n <= hi_n`` for every n = 0..N, so the conditioned law can be
sampled either by plain rejection or exactly by backward filtering over the
windows (which also yields P(tube) without Monte Carlo error).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    EmptyTube,
    MaxAttemptsExceeded,
    NonLatticeIncrement,
    ZeroAcceptances,
)
from .heights import height_from_config
from .measures import sample_occupancies
from .zrp import Configuration

_WINDOW_TOL = 1e-9


@dataclass(eq=False)
class WalkPath:
    """S_0 = 0 and increments in N^-1/2 Z>=0."""

    S: np.ndarray

    @property
    def N(self):
        return self.S.shape[0] - 1


def walk_from_config(config):
    eta = config.eta if hasattr(config, "eta") else np.asarray(config)
    N = eta.shape[0]
    S = np.concatenate([[0.0], np.cumsum(eta)]) / math.sqrt(N)
    return WalkPath(S)


def config_from_walk(path, rate=None):
    S = np.asarray(path.S if isinstance(path, WalkPath) else path, dtype=float)
    N = S.shape[0] - 1
    if S[0] != 0:
        raise NonLatticeIncrement("walk must start at S_0 = 0")
    inc = np.diff(S) * math.sqrt(N)
    eta = np.rint(inc)
    bad = np.flatnonzero((np.abs(inc - eta) > 1e-8 * np.maximum(1.0, np.abs(inc))) | (eta < 0))
    if bad.size:
        n = int(bad[0])
        raise NonLatticeIncrement(
            f"increment {n} is {inc[n]!r} N^-1/2, not a non-negative integer multiple")
    return Configuration(eta.astype(np.int64), rate)


class Profile:
    """Continuous profile on [0, 1] from a table, linear in between.

    A table on [0, 1) is closed periodically (value at 1 = value at 0).
    """

    def __init__(self, xs, values):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        order = np.argsort(xs)
        xs, values = xs[order], values[order]
        if xs[-1] < 1.0:
            xs = np.append(xs, 1.0)
            values = np.append(values, values[0])
        self.xs, self.values = xs, values

    def __call__(self, x):
        return np.interp(x, self.xs, self.values)

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("x,value\n")
            for x, v in zip(self.xs, self.values):
                if x < 1.0:
                    fh.write(f"{float(x)!r},{float(v)!r}\n")


@dataclass
class EnvelopeSpec:
    """Tube of half-width ``epsilon`` around ``target``.

    ``target`` is a callable on [0, 1] or an array of the N + 1 lattice
    values target(n/N).
    """

    target: object
    epsilon: float
    rho: float
    N: int
    max_attempts: int = 10 ** 7

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if abs(self.target_values()[0]) > 1e-12:
            raise ValueError("target must vanish at 0")

    def target_values(self):
        if callable(self.target):
            return np.asarray(self.target(np.arange(self.N + 1) / self.N), dtype=float)
        t = np.asarray(self.target, dtype=float)
        if t.shape != (self.N + 1,):
            raise ValueError(f"lattice target needs {self.N + 1} values, got {t.shape}")
        return t

    def windows(self):
        """Integer bounds (as floats, possibly infinite) on S_n, n = 0..N."""
        n = np.arange(self.N + 1)
        centre = self.rho * n + math.sqrt(self.N) * self.target_values()
        w = self.epsilon * math.sqrt(self.N)
        if math.isinf(w):
            return np.full(self.N + 1, -np.inf), np.full(self.N + 1, np.inf)
        slack = _WINDOW_TOL * np.maximum(1.0, np.abs(centre) + w)
        lo = np.maximum(np.ceil(centre - w - slack), 0.0)
        hi = np.floor(centre + w + slack)
        return lo, hi


def in_tube(spec, S):
    """Row-wise tube membership for prefix sums ``S`` of shape (..., N + 1)."""
    lo, hi = spec.windows()
    return np.all((S >= lo) & (S <= hi), axis=-1)


def tube_distance(spec, config):
    """sup_x |H_x - target(x/N)| with zero flux."""
    H = height_from_config(config, spec.rho, 0).values
    return float(np.max(np.abs(H - spec.target_values())))


def wilson_interval(k, n, level=0.95):
    z = stats.norm.ppf(0.5 + level / 2)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def clopper_pearson(k, n, level=0.95):
    a = 1 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass
class EnvelopeResult:
    config: Configuration
    attempts: int
    accept_rate: float
    accept_ci: tuple = field(default=(0.0, 1.0))
    method: str = "rejection"


def _prefix_sums(eta):
    S = np.zeros(eta.shape[:-1] + (eta.shape[-1] + 1,), dtype=np.int64)
    np.cumsum(eta, axis=-1, out=S[..., 1:])
    return S


def envelope_sample(spec, measure, rng, method="rejection", batch=4096):
    """Draw from nu_alpha^N conditioned on the tube.

    ``method="rejection"`` proposes i.i.d. configurations in batches and
    keeps the first that lands in the tube; ``accept_rate`` is estimated
    from every proposal drawn. ``method="exact"`` samples the same law by
    backward filtering (no attempts, accept rate = exact P(tube)).
    """
    if method == "exact":
        sampler = TubeSampler(spec, measure)
        eta = sampler.sample(1, rng)[0]
        config = Configuration(eta, measure.rate)
        p = math.exp(sampler.log_prob)
        _verify(spec, config)
        return EnvelopeResult(config, 1, p, (p, p), "exact")
    if method != "rejection":
        raise ValueError(f"unknown method {method!r}")
    lo, hi = spec.windows()
    attempts = drawn = accepted = 0
    first = None
    while first is None:
        if drawn >= spec.max_attempts:
            raise MaxAttemptsExceeded(
                f"no configuration in the tube after {drawn} attempts", drawn)
        b = min(batch, spec.max_attempts - drawn)
        eta = sample_occupancies(measure, (b, spec.N), rng)
        S = _prefix_sums(eta)
        ok = np.all((S >= lo) & (S <= hi), axis=1)
        hits = np.flatnonzero(ok)
        if hits.size:
            first = eta[hits[0]]
            attempts = drawn + int(hits[0]) + 1
        drawn += b
        accepted += int(hits.size)
    config = Configuration(first, measure.rate)
    _verify(spec, config)
    return EnvelopeResult(config, attempts, accepted / drawn,
                          wilson_interval(accepted, drawn), "rejection")


def _verify(spec, config):
    d = tube_distance(spec, config)
    if d > spec.epsilon * (1 + 1e-9) + 1e-12:
        raise AssertionError(f"accepted configuration at distance {d} > eps={spec.epsilon}")


class TubeSampler:
    """Exact sampler and probability for the walk conditioned on the tube.

    Backward messages ``beta_n(s) = P(S stays in windows n..N | S_n = s)``
    are computed once; forward sampling then draws each increment from
    ``pmf(s' - s) beta_{n+1}(s')`` renormalised.
    """

    def __init__(self, spec, measure):
        lo, hi = spec.windows()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("exact tube sampling needs a finite epsilon")
        if lo[0] > 0 or hi[0] < 0:
            raise EmptyTube("S_0 = 0 lies outside the first window")
        self.N = spec.N
        self.lo = lo.astype(np.int64)
        self.hi = hi.astype(np.int64)
        pmf = measure.pmf
        K = pmf.shape[0] - 1
        self.trans = []
        log_scale = 0.0
        beta = np.ones(max(self.hi[-1] - self.lo[-1] + 1, 0))
        if beta.size == 0:
            raise EmptyTube("empty window at n = N")
        mats = [None] * self.N
        for n in range(self.N - 1, -1, -1):
            s = np.arange(self.lo[n], self.hi[n] + 1)[:, None]
            s1 = np.arange(self.lo[n + 1], self.hi[n + 1] + 1)[None, :]
            d = s1 - s
            P = np.where((d >= 0) & (d <= K), pmf[np.clip(d, 0, K)], 0.0)
            W = P * beta[None, :]
            b = W.sum(axis=1)
            top = b.max() if b.size else 0.0
            if top <= 0:
                raise EmptyTube(f"tube cannot be traversed from n = {n}")
            with np.errstate(invalid="ignore", divide="ignore"):
                rows = np.where(b[:, None] > 0, W / b[:, None], 0.0)
            mats[n] = np.cumsum(rows, axis=1)
            log_scale += math.log(top)
            beta = b / top
        i0 = 0 - self.lo[0]
        if beta[i0] <= 0:
            raise EmptyTube("tube has zero probability from S_0 = 0")
        self.log_prob = math.log(beta[i0]) + log_scale
        self.cdfs = mats

    def sample(self, size, rng):
        """``size`` configurations (as occupancy rows) from the conditioned law."""
        u = rng.random((size, self.N))
        idx = np.full(size, 0 - self.lo[0])
        S = np.zeros((size, self.N + 1), dtype=np.int64)
        for n in range(self.N):
            cdf = self.cdfs[n][idx]
            cdf[:, -1] = np.inf  # guard against rounding in the last entry
            j = np.argmax(u[:, n, None] < cdf, axis=1)
            S[:, n + 1] = self.lo[n + 1] + j
            idx = j
        return np.diff(S, axis=1)


def tube_log_probability(spec, measure):
    """Exact log P(tube) under nu_alpha^N."""
    return TubeSampler(spec, measure).log_prob


@dataclass(frozen=True)
class EntropyEstimate:
    H_hat: float
    ci: tuple
    p_hat: float
    p_ci: tuple
    samples: int
    accepted: int


def count_tube_hits(spec, measure, samples, rng, batch=1 << 14):
    lo, hi = spec.windows()
    hits = 0
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        S = _prefix_sums(sample_occupancies(measure, (b, spec.N), rng))
        hits += int(np.count_nonzero(np.all((S >= lo) & (S <= hi), axis=1)))
        done += b
    return hits


def relative_entropy_estimate(spec, measure, samples, rng, level=0.95):
    """Monte Carlo estimate of H(mu_eps | nu) = -log P(tube).

    The interval is the Clopper-Pearson interval on p mapped through -log.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    hits = count_tube_hits(spec, measure, samples, rng)
    p_lo, p_hi = clopper_pearson(hits, samples, level)
    if hits == 0:
        raise ZeroAcceptances(
            f"no acceptances in {samples} samples", samples, -math.log(p_hi))
    p = hits / samples
    return EntropyEstimate(-math.log(p), (-math.log(p_hi), -math.log(p_lo) if p_lo > 0 else math.inf),
                           p, (p_lo, p_hi), samples, hits)


def small_ball_series(epsilon, D=1.0, terms=200):
    """P(sup_[0,1] |B| < eps) for Brownian motion with variance D t.

    Uses the reflection-principle series in exp(-(2n+1)^2 pi^2 D / 8 eps^2)
    for small eps/sqrt(D) and the equivalent alternating normal-CDF series
    otherwise; both are exact.
    """
    a = epsilon / math.sqrt(D)
    if a <= 1.5:
        n = np.arange(terms)
        s = (-1.0) ** n / (2 * n + 1) * np.exp(-((2 * n + 1) ** 2) * math.pi ** 2 / (8 * a * a))
        return float(4 / math.pi * math.fsum(s))
    k = np.arange(-terms, terms + 1)
    s = (-1.0) ** k * (stats.norm.cdf((2 * k + 1) * a) - stats.norm.cdf((2 * k - 1) * a))
    return float(math.fsum(s))


def small_ball_series_exp(epsilon, D=1.0, terms=2000):
    """The exponential reflection series alone, summed to ``terms``."""
    a = epsilon / math.sqrt(D)
    n = np.arange(terms)
    s = (-1.0) ** n / (2 * n + 1) * np.exp(-((2 * n + 1) ** 2) * math.pi ** 2 / (8 * a * a))
    return float(4 / math.pi * math.fsum(s))


def brownian_small_ball(f, epsilon, D, samples, rng, grid=512, bridge=True, chunk=2000):
    """Monte Carlo P(sup_[0,1] |f - B| < eps), B of variance D t, B_0 = 0.

    Paths are sampled on ``grid`` steps; with ``bridge=True`` each path is
    weighted by the Brownian-bridge probability of not crossing the
    (piecewise linear) barriers between grid points, which removes the
    discrete-monitoring bias. Returns (estimate, standard error).
    """
    if D <= 0:
        raise ValueError("D must be positive")
    t = np.linspace(0.0, 1.0, grid + 1)
    fv = np.asarray(f(t), dtype=float) if callable(f) else np.broadcast_to(float(f), t.shape)
    if abs(fv[0]) > 1e-12:
        raise ValueError("profile must vanish at 0")
    dt = 1.0 / grid
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        B = np.zeros((m, grid + 1))
        np.cumsum(rng.normal(0.0, math.sqrt(D * dt), (m, grid)), axis=1, out=B[:, 1:])
        up = fv + epsilon - B
        down = B - (fv - epsilon)
        inside = np.all((up > 0) & (down > 0), axis=1)
        w = inside.astype(float)
        if bridge:
            with np.errstate(over="ignore", invalid="ignore"):
                pu = np.exp(-2 * up[:, :-1] * up[:, 1:] / (D * dt))
                pd = np.exp(-2 * down[:, :-1] * down[:, 1:] / (D * dt))
            surv = np.clip(1 - pu - pd, 0.0, 1.0)
            surv[~inside] = 0.0
            w = np.prod(surv, axis=1)
        total += w.sum()
        total_sq += (w * w).sum()
        done += m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)
