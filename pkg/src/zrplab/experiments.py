"""Ensemble experiments behind the command line.

Replica ``i`` of an experiment with master seed ``s`` always draws from
``seeded_rng(s, i)``; results are gathered in replica order, so every
output is the same for any worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .coupling import CoupledState, check_height_sandwich, coupled_run, enumerate_single_events
from .envelope import EnvelopeSpec, TubeSampler, clopper_pearson, count_tube_hits
from .heights import height_from_config
from .measures import sample_configuration, sample_occupancies, solve_fugacity
from .spde import (
    DERIVATIVE,
    GridField,
    feller_check_sbe,
    heat_spectral,
    mshe_evolve,
    ou_mode_series,
    stationary_variance,
)
from .zrp import run_until, seeded_rng


def map_replicas(fn, tasks, workers=1):
    """Apply ``fn`` to every task, in order, optionally in worker processes."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------- invariance

@dataclass
class InvarianceReport:
    tv: np.ndarray
    p_site: np.ndarray
    chi2: float
    dof: int
    p_pooled: float
    counts: np.ndarray
    expected: np.ndarray
    runs: int

    @property
    def max_tv(self):
        return float(self.tv.max())

    def passed(self, tv_gate=0.05, level=1e-3):
        return self.max_tv < tv_gate and self.p_pooled > level


def _merge_bins(pmf, min_expected):
    """Group consecutive k so every expected count is at least ``min_expected``."""
    groups, cur, acc = [], [], 0.0
    for k, e in enumerate(pmf):
        cur.append(k)
        acc += e
        if acc >= min_expected:
            groups.append(cur)
            cur, acc = [], 0.0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    return groups


def chi_square_gof(samples, pmf, min_expected=5.0):
    """Pearson goodness of fit of integer samples against ``pmf`` (tail lumped)."""
    samples = np.asarray(samples).ravel()
    n = samples.size
    K = pmf.shape[0] - 1
    counts = np.bincount(np.minimum(samples, K), minlength=K + 1).astype(float)
    expected = n * pmf
    groups = _merge_bins(expected, min_expected)
    o = np.array([counts[g].sum() for g in groups])
    e = np.array([expected[g].sum() for g in groups])
    e *= n / e.sum()
    chi2 = float(((o - e) ** 2 / e).sum())
    dof = len(groups) - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0


def _invariance_replica(task):
    params, init_measure, T, seed, i = task
    rng = seeded_rng(seed, i)
    config = sample_configuration(init_measure, params.N, rng, params.rate)
    run_until(config, params, T, rng)
    return config.eta.copy()


def invariance(params, measure, T, runs, seed, workers=1, init_measure=None):
    """Run from nu_alpha to time T and compare site marginals with the pmf."""
    init = measure if init_measure is None else init_measure
    tasks = [(params, init, T, seed, i) for i in range(runs)]
    etas = np.array(map_replicas(_invariance_replica, tasks, workers))
    pmf = measure.pmf
    K = pmf.shape[0] - 1
    tv = np.empty(params.N)
    p_site = np.empty(params.N)
    for x in range(params.N):
        col = etas[:, x]
        top = max(K, int(col.max()))
        emp = np.bincount(col, minlength=top + 1) / runs
        ref = np.zeros(top + 1)
        ref[:K + 1] = pmf
        tv[x] = 0.5 * np.abs(emp - ref).sum()
        p_site[x] = chi_square_gof(col, pmf)[2]
    chi2, dof, p = chi_square_gof(etas, pmf)
    counts = np.bincount(np.minimum(etas.ravel(), K), minlength=K + 1)
    return InvarianceReport(tv, p_site, chi2, dof, p, counts, etas.size * pmf, runs)


# ------------------------------------------------------------- stationary fCLT

@dataclass
class FCLTReport:
    variance: float
    variance_se: float
    predicted: float
    ks_stat: float
    ks_p: float
    ks_stat_raw: float
    ks_p_raw: float
    samples: int


def stationary_height_clt(measure, N, samples, seed, x=None, batch=20000):
    """Samples of H_{0,x} under nu_alpha^N (x = N/2 by default) and a KS test.

    The lattice atoms of H are spread uniformly over their cells before the
    KS comparison with the normal law (continuity correction); the raw KS
    result is reported too.
    """
    x = N // 2 if x is None else x
    rng = seeded_rng(seed)
    out = []
    left = samples
    while left > 0:
        b = min(batch, left)
        eta = sample_occupancies(measure, (b, x), rng)
        out.append((eta.sum(axis=1) - measure.mean_rho * x) / math.sqrt(N))
        left -= b
    h = np.concatenate(out)
    predicted = measure.chi * x / N
    jitter = rng.uniform(-0.5, 0.5, h.shape) / math.sqrt(N)
    z = (h + jitter) / math.sqrt(predicted)
    ks = stats.kstest(z, "norm")
    ks_raw = stats.kstest(h / math.sqrt(predicted), "norm")
    var = float(h.var(ddof=1))
    m4 = float(np.mean((h - h.mean()) ** 4))
    se = math.sqrt(max(m4 - var ** 2, 0.0) / samples)
    return FCLTReport(var, se, predicted, float(ks.statistic), float(ks.pvalue),
                      float(ks_raw.statistic), float(ks_raw.pvalue), samples)


# ------------------------------------------------------------------ crossover

def mode_pairing(config, params, rho, c_prime, k=1):
    """Complex mode-k field N^-1/2 sum (eta - rho) e^{-2 pi i k (x/N - shift)}."""
    N = params.N
    shift = params.frame_speed_factor * c_prime * config.time
    ph = np.exp(-2j * np.pi * k * (np.arange(N) / N - shift))
    return complex(np.dot(config.eta - rho, ph)) / math.sqrt(N)


def _mode_series_replica(task):
    params, measure, dt, n, seed, i, k = task
    rng = seeded_rng(seed, i)
    config = sample_configuration(measure, params.N, rng, params.rate)
    out = np.empty(n + 1, dtype=complex)
    out[0] = mode_pairing(config, params, measure.mean_rho, measure.c_prime, k)
    for j in range(1, n + 1):
        run_until(config, params, j * dt, rng)
        out[j] = mode_pairing(config, params, measure.mean_rho, measure.c_prime, k)
    return out


def microscopic_mode_series(params, measure, dt, n, runs, seed, workers=1, k=1):
    tasks = [(params, measure, dt, n, seed, i, k) for i in range(runs)]
    return np.array(map_replicas(_mode_series_replica, tasks, workers))


@dataclass
class ModeStatistics:
    """Mode variance and autocorrelation decay rate with ensemble standard errors."""

    variance: float
    variance_se: float
    rate: float
    rate_se: float
    lags: np.ndarray
    acf: np.ndarray
    runs: int


def mode_statistics(series, dt, lags):
    """Variance of <Y, cos> and <Y, sin> and exponential rate of the ACF.

    ``series`` has shape (runs, n + 1). The rate of run r is fitted by least
    squares on the log of the ensemble-mean acf over ``lags`` (in steps).
    The variance SE is the spread of per-run variances; the rate SE is a
    leave-one-run-out jackknife.
    """
    re = np.concatenate([series.real, series.imag], axis=0)
    runs = series.shape[0]
    lags = np.asarray(lags)
    var_r = np.empty(runs)
    rate_r = np.empty(runs)
    acf_all = np.empty((runs, len(lags)))
    for r in range(runs):
        parts = (re[r], re[r + runs])
        v = np.mean([np.mean(p * p) for p in parts])
        cov = np.array([np.mean([np.mean(p[:-L] * p[L:]) for p in parts]) for L in lags])
        var_r[r] = v
        acf_all[r] = cov / v
    acf = acf_all.mean(axis=0)
    # rate from the mean ACF; per-run spread by jackknife
    def fit(a):
        good = a > 0
        t = lags[good] * dt
        return float(-np.sum(t * np.log(a[good])) / np.sum(t * t))

    rate = fit(acf)
    for r in range(runs):
        rate_r[r] = fit(np.delete(acf_all, r, axis=0).mean(axis=0))
    jk_se = math.sqrt((runs - 1) / runs * np.sum((rate_r - rate_r.mean()) ** 2))
    return ModeStatistics(float(var_r.mean()), float(var_r.std(ddof=1) / math.sqrt(runs)),
                          rate, jk_se, lags, acf, runs)


def spectral_mode_series(a, b, dt, n, runs, seed, k=1):
    """Stationary exact OU series of mode k for the derivative equation."""
    rng = seeded_rng(seed)
    v = stationary_variance(k, a, b, DERIVATIVE)
    y0 = math.sqrt(v / 2) * (rng.standard_normal(runs) + 1j * rng.standard_normal(runs))
    return ou_mode_series(y0, a, b, k, dt, n, rng, DERIVATIVE, size=runs)


@dataclass
class CrossoverOUReport:
    micro: ModeStatistics
    spectral: ModeStatistics
    a: float
    b: float
    static_variance: float

    def z_scores(self):
        zv = (self.micro.variance - self.spectral.variance) / math.hypot(
            self.micro.variance_se, self.spectral.variance_se)
        zr = (self.micro.rate - self.spectral.rate) / math.hypot(
            self.micro.rate_se, self.spectral.rate_se)
        return zv, zr

    def passed(self, nsigma=3.0):
        zv, zr = self.z_scores()
        return abs(zv) <= nsigma and abs(zr) <= nsigma


def crossover_ou(params, measure, a, b, dt, n, runs, seed, workers=1, lags=(2, 4, 6, 8),
                 micro=None):
    """Mode-1 statistics of the microscopic field against the spectral solver."""
    if micro is None:
        micro = microscopic_mode_series(params, measure, dt, n, runs, seed, workers)
    spec = spectral_mode_series(a, b, dt, n, runs, seed + 1)
    m = mode_statistics(micro, dt, lags)
    s = mode_statistics(spec, dt, lags)
    # <Y, cos 2 pi x> has static variance chi N^-1 sum J^2 = chi / 2
    return CrossoverOUReport(m, s, a, b, measure.chi / 2)


def _increment_replica(task):
    params, measure, T, seed, i = task
    rng = seeded_rng(seed, i)
    config = sample_configuration(measure, params.N, rng, params.rate)
    h0 = height_from_config(config, measure.mean_rho).values
    run_until(config, params, T, rng)
    h1 = height_from_config(config, measure.mean_rho).values
    return frame_increments(h0, h1, params, measure.c_prime, T)


def frame_increments(h0, h1, params, c_prime, T):
    """H_{T, x + shift} - H_{0, x} along the drifting frame (lattice shift rounded).

    Heights are continued past N by the winding H_{x+N} = H_x + (H_N - H_0).
    """
    N = params.N
    shift = int(round(params.frame_speed_factor * c_prime * T * N))
    idx = np.arange(N) + shift
    wind = h1[N] - h1[0]
    lifted = h1[idx % N] + (idx // N) * wind
    return lifted - h0[:N]


@dataclass
class SkewnessReport:
    beta: float
    skewness: float
    se: float
    runs: int

    @property
    def z(self):
        return self.skewness / self.se if self.se > 0 else math.inf


def increment_skewness(params, measure, T, runs, seed, workers=1, n_boot=400):
    """Skewness of pooled frame increments; SE by bootstrap over runs."""
    tasks = [(params, measure, T, seed, i) for i in range(runs)]
    inc = np.array(map_replicas(_increment_replica, tasks, workers))
    s = float(stats.skew(inc.ravel()))
    rng = seeded_rng(seed, 1 << 30)
    boot = np.empty(n_boot)
    for j in range(n_boot):
        boot[j] = stats.skew(inc[rng.integers(0, runs, runs)].ravel())
    return SkewnessReport(params.beta, s, float(boot.std(ddof=1)), runs)


# -------------------------------------------------------------- entropy scan

@dataclass
class EntropyRow:
    N: int
    epsilon: float
    p_hat: float
    ci_low: float
    ci_high: float
    H_hat: float
    H_low: float
    H_high: float
    exact_H: float
    samples: int
    accepted: int


def _hits_replica(task):
    spec, measure, n, seed, i = task
    return count_tube_hits(spec, measure, n, seeded_rng(seed, i))


def entropy_point(spec, measure, samples, seed, workers=1, chunk=200000, level=0.95):
    n_chunks = max(1, math.ceil(samples / chunk))
    sizes = [samples // n_chunks + (1 if i < samples % n_chunks else 0) for i in range(n_chunks)]
    tasks = [(spec, measure, sizes[i], seed, i) for i in range(n_chunks)]
    hits = int(sum(map_replicas(_hits_replica, tasks, workers)))
    lo, hi = clopper_pearson(hits, samples, level)
    try:
        exact = -TubeSampler(spec, measure).log_prob
    except Exception:
        exact = math.nan
    if hits == 0:
        return EntropyRow(spec.N, spec.epsilon, 0.0, lo, hi, math.inf, -math.log(hi), math.inf,
                          exact, samples, 0)
    p = hits / samples
    return EntropyRow(spec.N, spec.epsilon, p, lo, hi, -math.log(p), -math.log(hi),
                      -math.log(lo) if lo > 0 else math.inf, exact, samples, hits)


def entropy_scan(target, measure, Ns, epsilons, samples, seed, workers=1):
    rows = []
    for j, N in enumerate(Ns):
        for l, eps in enumerate(epsilons):
            spec = EnvelopeSpec(target, eps, measure.mean_rho, N)
            rows.append(entropy_point(spec, measure, samples, seed + 1000 * j + l, workers))
    return rows


def corridor_check(rows, factor=2.0):
    """Point estimates within a factor-``factor`` band and CIs jointly compatible.

    The second condition requires one value of H that every row's CI can
    reach after scaling by at most ``factor``: max lower bound <= factor *
    min upper bound.
    """
    H = np.array([r.H_hat for r in rows])
    lo = np.array([r.H_low for r in rows])
    hi = np.array([r.H_high for r in rows])
    if not np.all(np.isfinite(H)):
        return False
    return bool(H.max() <= factor * H.min() and lo.max() <= factor * hi.min())


def write_entropy_csv(path, rows, header=""):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        fh.write("N,eps,p_hat,CI_low,CI_high,H_hat,exact_H,samples,accepted\n")
        for r in rows:
            fh.write(f"{r.N},{float(r.epsilon)!r},{float(r.p_hat)!r},{float(r.ci_low)!r},{float(r.ci_high)!r},"
                     f"{float(r.H_hat)!r},{float(r.exact_H)!r},{r.samples},{r.accepted}\n")


# ------------------------------------------------------------------ sandwich

@dataclass
class SandwichRun:
    run: int
    violations: int
    selections: int
    first_event: int
    first_site: int
    first_slack: float
    max_gap: int
    min_slack: float
    total_difference: int


def envelope_pair(params, measure, epsilon, rng, equal_totals=False):
    """Reference nu_alpha sample and an envelope replica in its eps-tube.

    The tube target is the reference's own height profile. With
    ``equal_totals`` the envelope replica is redrawn until it carries the
    same number of particles (a diagnostic, not the envelope law).
    """
    ref = sample_configuration(measure, params.N, rng, params.rate)
    spec = EnvelopeSpec(height_from_config(ref, measure.mean_rho).values, epsilon,
                        measure.mean_rho, params.N)
    sampler = TubeSampler(spec, measure)
    while True:
        env = sampler.sample(1, rng)[0]
        if not equal_totals or env.sum() == ref.eta.sum():
            return ref.eta, env


def _sandwich_replica(task):
    params, measure, epsilon, kappa, T, seed, i, equal_totals = task
    rng = seeded_rng(seed, i)
    ref, env = envelope_pair(params, measure, epsilon, rng, equal_totals)
    state = CoupledState(np.stack([ref, env]), params, kappa)
    rep = check_height_sandwich(state, epsilon, T, rng)
    fv = rep.first_violation or (-1, -1, -1, math.nan)
    sqrtN = math.sqrt(params.N)
    return SandwichRun(i, rep.violations, rep.selections, fv[0], fv[1], fv[3], rep.max_gap,
                       kappa * epsilon - rep.max_gap / sqrtN, int(env.sum() - ref.sum()))


def sandwich_ensemble(params, measure, epsilon, kappa, T, runs, seed, workers=1,
                      equal_totals=False):
    tasks = [(params, measure, epsilon, kappa, T, seed, i, equal_totals) for i in range(runs)]
    return map_replicas(_sandwich_replica, tasks, workers)


def write_sandwich_csv(path, runs, header=""):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        fh.write("run,event_index,site,slack,violations,selections,max_gap,min_slack,"
                 "total_difference\n")
        for r in runs:
            fh.write(f"{r.run},{r.first_event},{r.first_site},{float(r.first_slack)!r},{r.violations},"
                     f"{r.selections},{r.max_gap},{float(r.min_slack)!r},{r.total_difference}\n")


# --------------------------------------------------------------- attractivity

def _attractive_replica(task):
    params, measure, extra, T, seed, i = task
    rng = seeded_rng(seed, i)
    low = sample_configuration(measure, params.N, rng, params.rate).eta
    high = low + sample_occupancies(extra, (params.N,), rng)
    state = CoupledState(np.stack([low, high]), params)
    st = coupled_run(state, T, rng, order_pairs=[(0, 1)], check_sandwich=False)
    return st.order_violations, st.selections


def attractivity(params, measure, T, runs, seed, workers=1, extra_rho=0.5):
    """Order violations over long coupled runs of eta <= eta + xi."""
    extra = solve_fugacity(params.rate, extra_rho)
    tasks = [(params, measure, extra, T, seed, i) for i in range(runs)]
    res = map_replicas(_attractive_replica, tasks, workers)
    enum_cases, enum_broken = enumerate_single_events(params.rate, 3, 2)
    return {"violations": int(sum(v for v, _ in res)),
            "selections": int(sum(s for _, s in res)),
            "enumerated": enum_cases, "enumeration_failures": len(enum_broken)}


# ---------------------------------------------------------------- spde bench

def mshe_heat_convergence(Ms, T, a=1.0, Z0=None):
    """L2 error of the lambda = 0 scheme against the spectral heat solution."""
    errs = []
    Z0 = (lambda x: np.exp(0.5 * np.sin(2 * np.pi * x))) if Z0 is None else Z0
    for M in Ms:
        x = np.arange(M) / M
        z0 = Z0(x)
        f = mshe_evolve(GridField(z0, 0.0, a), T, 1.0 / (4 * a * M * M), None)
        ex = heat_spectral(z0, a, T)
        errs.append(float(np.sqrt(np.mean((f.values - ex) ** 2))))
    errs = np.array(errs)
    dx = 1.0 / np.asarray(Ms, dtype=float)
    order = float(np.polyfit(np.log(dx), np.log(errs), 1)[0])
    return errs, order


def sbe_feller(J, T, epsilons, ensemble, seed, M=256, lam=1.0, a=1.0, workers=1):
    """Shared-noise MSHE pairs for each eps; one noise seed across the eps-sequence."""
    x = np.arange(M) / M
    Z0 = np.exp(0.5 * np.sin(2 * np.pi * x))
    tasks = [(Z0, J, T, seed, ensemble, e, lam, a) for e in epsilons]
    return map_replicas(_feller_task, tasks, workers)


def _feller_task(task):
    Z0, J, T, seed, ensemble, e, lam, a = task
    return feller_check_sbe(Z0, J, T, seed, ensemble, e, lam=lam, a=a)


def sample_invariant(params, measure, count, seed):
    rng = seeded_rng(seed)
    return sample_occupancies(measure, (count, params.N), rng)
