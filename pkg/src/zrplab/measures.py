"""Product invariant measures nu_alpha of the zero-range process.

The single-site marginal has weights ``alpha^k / prod_{j<=k} g(j)`` (empty
product = 1 at k = 0). Since ``sum_k g(k) w_k = alpha sum_k w_k`` the
expected jump rate equals the fugacity, ``c_rho = alpha_rho``, and the
exponential-family identity ``d rho / d log(alpha) = chi`` gives
``c'_rho = alpha / chi``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DensityUnreachable,
    DivergentPartitionFunction,
    NoConvergence,
    TruncationTooSmall,
)
from .rates import RateFunction
from .zrp import Configuration

TAIL_TOL = 1e-12
_K_HARD_LIMIT = 1 << 20


@dataclass(eq=False)
class ProductMeasure:
    alpha: float
    pmf: np.ndarray = field(repr=False)
    log_Z: float
    rate: RateFunction | None = None
    tail_mass: float = 0.0
    mean_rho: float = field(init=False)
    chi: float = field(init=False)
    third_cumulant: float = field(init=False)
    c: float = field(init=False)
    c_prime: float = field(init=False)
    c_second: float = field(init=False)

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        k = np.arange(self.K + 1, dtype=float)
        p = self.pmf
        self.mean_rho = math.fsum(p * k)
        d = k - self.mean_rho
        self.chi = math.fsum(p * d * d)
        self.third_cumulant = math.fsum(p * d ** 3)
        if self.rate is not None:
            self.c = math.fsum(p[1:] * self.rate.table_upto(self.K)[1:])
        else:
            self.c = self.alpha
        if self.chi > 0:
            self.c_prime = self.alpha / self.chi
            self.c_second = self.alpha * (1.0 - self.third_cumulant / self.chi) / self.chi ** 2
        else:
            # alpha -> 0: rho ~ alpha / g(1)
            g1 = self.rate.table_upto(1)[1] if self.rate is not None else 1.0
            self.c_prime = g1
            self.c_second = math.nan

    @classmethod
    def from_pmf(cls, pmf, rate=None):
        """Wrap an arbitrary pmf (no fugacity); used for moment checks."""
        pmf = np.asarray(pmf, dtype=float)
        pmf = pmf / pmf.sum()
        return cls(alpha=math.nan, pmf=pmf, log_Z=math.nan, rate=rate)

    @property
    def K(self):
        return self.pmf.shape[0] - 1

    @property
    def Z(self):
        return math.exp(self.log_Z)

    @property
    def D(self):
        """Diffusion coefficient of the stationary height random walk."""
        return self.chi

    @property
    def cdf(self):
        c = np.cumsum(self.pmf)
        c[-1] = 1.0
        return c

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"# alpha={self.alpha!r} Z={self.Z!r} rho={self.mean_rho!r} "
                     f"chi={self.chi!r} c={self.c!r} c_prime={self.c_prime!r} "
                     f"c_second={self.c_second!r}\n")
            fh.write("k,pmf\n")
            for k, p in enumerate(self.pmf):
                fh.write(f"{k},{float(p)!r}\n")


def _log_weights(rate, alpha, K):
    g = rate.table_upto(K)
    lw = np.empty(K + 1)
    lw[0] = 0.0
    if K:
        lw[1:] = np.arange(1, K + 1) * math.log(alpha) - np.cumsum(np.log(g[1:]))
    return lw


def _tail_bound(rate, alpha, K, lw_K, log_Z):
    """Upper bound on the mass beyond K (g non-decreasing => ratios decrease)."""
    try:
        g_next = rate.table_upto(K + 1)[K + 1]
    except Exception:
        return math.inf
    r = alpha / g_next
    if r >= 1:
        return math.inf
    return math.exp(lw_K - log_Z) * r / (1.0 - r)


def build_measure(rate, alpha, K=None, tail_tol=TAIL_TOL):
    """Single-site marginal of nu_alpha, truncated where the tail is < ``tail_tol``.

    Raises :class:`DivergentPartitionFunction` when alpha is at or beyond
    the radius of convergence, :class:`TruncationTooSmall` when a fixed
    ``K`` (or the end of a rate table) leaves too much tail mass.
    """
    alpha = float(alpha)
    if alpha < 0 or not math.isfinite(alpha):
        raise ValueError(f"alpha must be finite and >= 0, got {alpha}")
    if alpha == 0:
        return ProductMeasure(0.0, np.array([1.0]), 0.0, rate, 0.0)
    lim = rate.limit_ratio_bound()
    if lim is not None and alpha >= lim:
        raise DivergentPartitionFunction(
            f"partition function diverges at alpha={alpha} (radius {lim})")
    if K is not None:
        Ks = [int(K)]
    elif rate.kind == "table":
        Ks = [rate.k_max - 1]
    else:
        Ks = []
        k = 32
        while k <= _K_HARD_LIMIT:
            Ks.append(k)
            k *= 2
    for K in Ks:
        lw = _log_weights(rate, alpha, K)
        log_Z = float(logsumexp(lw))
        tail = _tail_bound(rate, alpha, K, lw[-1], log_Z)
        if tail < tail_tol:
            pmf = np.exp(lw - log_Z)
            pmf /= math.fsum(pmf)
            # trim negligible top entries
            keep = len(pmf)
            while keep > 2 and pmf[keep - 1] < 1e-300:
                keep -= 1
            return ProductMeasure(alpha, pmf[:keep], log_Z, rate, tail)
    raise TruncationTooSmall(f"tail mass {tail:.3g} exceeds {tail_tol:g} at K={K}")


def _mean(rate, alpha):
    return build_measure(rate, alpha).mean_rho


def solve_fugacity(rate, rho, tol=1e-13, max_iter=400):
    """The measure with mean occupancy ``rho``; bisection then Newton polish."""
    rho = float(rho)
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if rho == 0:
        return build_measure(rate, 0.0)
    lim = rate.limit_ratio_bound()
    if lim is None:
        lim = float(rate.table[-1])
    lo, hi = 0.0, None
    if math.isinf(lim):
        hi = max(1.0, rho)
        while _mean(rate, hi) < rho:
            lo, hi = hi, 2 * hi
    else:
        # mean(alpha) -> sup as alpha -> lim; probe towards the radius
        probe = lim * (1 - 1e-9)
        try:
            top = _mean(rate, probe)
            hi = lim
        except (TruncationTooSmall, DivergentPartitionFunction):
            if rate.kind != "table":
                top, hi = math.inf, lim
            else:
                # a finite table bounds the usable fugacity; locate the edge
                ok, bad = 0.0, probe
                for _ in range(200):
                    mid = 0.5 * (ok + bad)
                    try:
                        build_measure(rate, mid)
                        ok = mid
                    except (TruncationTooSmall, DivergentPartitionFunction):
                        bad = mid
                    if bad - ok < 1e-14 * bad:
                        break
                top = _mean(rate, ok) if ok > 0 else 0.0
                hi = bad
        if top < rho:
            raise DensityUnreachable(
                f"rho={rho} exceeds the largest reachable density {top:.6g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        try:
            m = build_measure(rate, mid)
        except (TruncationTooSmall, DivergentPartitionFunction):
            hi = mid
            continue
        if abs(m.mean_rho - rho) < 1e-6 * max(1.0, rho) or hi - lo < 1e-15:
            break
        if m.mean_rho < rho:
            lo = mid
        else:
            hi = mid
    else:
        raise NoConvergence(f"bisection for rho={rho} did not converge")
    alpha = mid
    for _ in range(50):
        # d rho / d alpha = chi / alpha
        step = (m.mean_rho - rho) * alpha / m.chi
        alpha_new = alpha - step
        if not lo <= alpha_new <= hi:
            alpha_new = 0.5 * (alpha + (lo if step > 0 else hi))
        m_new = build_measure(rate, alpha_new)
        if abs(m_new.mean_rho - rho) >= abs(m.mean_rho - rho) and abs(m.mean_rho - rho) <= tol:
            break
        alpha, m = alpha_new, m_new
        if abs(m.mean_rho - rho) <= tol * 1e-3:
            break
    if abs(m.mean_rho - rho) > tol:
        raise NoConvergence(f"|mean - rho| = {abs(m.mean_rho - rho):.3g} > tol={tol:g}")
    return m


@dataclass(frozen=True)
class TransportConstants:
    c: float
    c_prime: float
    c_second: float
    c_prime_identity: float
    c_prime_fd: float


def transport_constants(measure, rate, h=1e-3):
    """c_rho, c'_rho and d^2 c/d rho^2, with a finite-difference cross-check.

    ``c_prime_identity`` is alpha/chi; ``c_prime_fd`` differentiates
    ``alpha(rho)`` by Richardson-extrapolated central differences. The
    returned ``c_prime`` is the identity value unless rho = 0, where only
    a one-sided difference is available. ``c_second`` is the second central
    difference of ``c(rho) = E[g]``.
    """
    rho = measure.mean_rho
    c = math.fsum(measure.pmf[1:] * rate.table_upto(measure.K)[1:])

    def c_at(r):
        m = solve_fugacity(rate, r, tol=1e-15 * max(1.0, r) + 1e-15)
        return math.fsum(m.pmf[1:] * rate.table_upto(m.K)[1:])

    if measure.chi <= 0 or rho < 2 * h:
        # one-sided second-order difference at the boundary
        c0, c1, c2 = c, c_at(rho + h), c_at(rho + 2 * h)
        fd = (-3 * c0 + 4 * c1 - c2) / (2 * h)
        second = (c0 - 2 * c1 + c2) / h ** 2
        if measure.chi <= 0:
            warnings.warn("degenerate density: identity c' = alpha/chi is 0/0, "
                          "returning the finite-difference value", RuntimeWarning)
            return TransportConstants(c, fd, second, math.nan, fd)
        ident = measure.alpha / measure.chi
        return TransportConstants(c, ident, second, ident, fd)
    cp1, cm1 = c_at(rho + h), c_at(rho - h)
    cp2, cm2 = c_at(rho + 2 * h), c_at(rho - 2 * h)
    d1 = (cp1 - cm1) / (2 * h)
    d2 = (cp2 - cm2) / (4 * h)
    fd = (4 * d1 - d2) / 3
    second = (cp1 - 2 * c + cm1) / h ** 2
    ident = measure.alpha / measure.chi
    return TransportConstants(c, ident, second, ident, fd)


def sample_configuration(measure, N, rng, rate=None):
    """N i.i.d. draws from the marginal by inverse CDF."""
    rate = rate if rate is not None else measure.rate
    return Configuration(sample_occupancies(measure, (N,), rng), rate)


def sample_occupancies(measure, shape, rng):
    """Array of i.i.d. occupancies with the given shape."""
    u = rng.random(shape)
    return np.minimum(np.searchsorted(measure.cdf, u, side="right"), measure.K).astype(np.int64)


def moment_condition_check(measure, delta):
    """Whether sum_k pmf(k) k^(2+delta) converges, judged from the tail.

    Raabe's test on the last two terms, which separates geometric and
    faster tails (statistic grows like K) from polynomial ones.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    k = np.arange(measure.K + 1, dtype=float)
    terms = measure.pmf * k ** (2 + delta)
    nz = np.flatnonzero(terms > 0)
    if len(nz) < 3 or nz[-1] < 3:
        return True
    K = nz[-1]
    t1, t0 = terms[K], terms[K - 1]
    if t1 >= t0:
        return False
    # Raabe: K (t_{K-1}/t_K - 1) -> p - 2 - delta for pmf ~ k^-p, -> inf for
    # geometric or faster tails
    raabe = K * (t0 / t1 - 1.0)
    return bool(raabe > 1.0)
