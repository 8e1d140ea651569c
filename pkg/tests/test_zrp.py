import itertools
import math

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from zrplab.errors import EmptySystem, RateTableOverflow
from zrplab.heights import HeightRecorder, height_from_config
from zrplab.rates import RateFunction
from zrplab.zrp import (
    Configuration,
    ModelParams,
    read_configuration,
    read_event_log,
    run_until,
    seeded_rng,
    step,
    total_jump_rate,
    write_configuration,
    write_event_log,
)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(N=1)
    with pytest.raises(ValueError):
        ModelParams(N=8, beta=0.4)
    p = ModelParams(N=16, gamma=2.0, beta=0.5)
    assert p.asymmetry == pytest.approx(0.5)
    assert p.p_right == pytest.approx(1.5 / 2.5)
    assert p.rate_scale == pytest.approx(256 * 2.5)


def test_empty_system():
    c = Configuration(np.zeros(5, dtype=int))
    with pytest.raises(EmptySystem):
        step(c, ModelParams(N=5), seeded_rng(0))
    run_until(c, ModelParams(N=5), 1.0, seeded_rng(0))
    assert c.time == 1.0


def test_table_overflow_raised():
    rate = RateFunction.tabulated([0, 1, 1])
    with pytest.raises(RateTableOverflow):
        Configuration([3, 0, 0], rate)


def test_total_rate_linear():
    p = ModelParams(N=4, gamma=1.0, beta=1.0, rate=RateFunction.linear())
    c = Configuration([1, 2, 0, 3], RateFunction.linear())
    assert total_jump_rate(c, p) == pytest.approx(16 * (2 + 0.25) * 6)


def test_conservation_and_determinism():
    p = ModelParams(N=32, gamma=1.0, beta=0.5)
    a = Configuration(np.arange(32) % 3)
    b = a.copy()
    sa = run_until(a, p, 0.05, seeded_rng(4), record=True)
    sb = run_until(b, p, 0.05, seeded_rng(4), record=True)
    assert sa.events == sb.events
    assert np.array_equal(a.eta, b.eta) and a.flux == b.flux
    assert a.total == int(a.eta.sum()) == int((np.arange(32) % 3).sum())
    a.check()


def test_chunking_does_not_change_the_path():
    p = ModelParams(N=16, gamma=0.5, beta=0.5)
    a = Configuration(np.ones(16, dtype=int))
    b = a.copy()
    run_until(a, p, 0.1, seeded_rng(9), record=True, chunk=17)
    run_until(b, p, 0.1, seeded_rng(9), record=True)
    assert np.array_equal(a.eta, b.eta) and a.flux == b.flux


def test_event_replay_and_flux():
    p = ModelParams(N=8, gamma=2.0, beta=0.5)
    c = Configuration([2, 0, 1, 0, 3, 0, 0, 1])
    start = c.copy()
    rec = HeightRecorder(c, 1.0)
    stats_ = run_until(c, p, 0.2, seeded_rng(1), observers=[rec], record=True)
    eta = start.eta.copy()
    flux = 0
    for ev in stats_.events:
        assert abs(ev.to_site - ev.from_site) in (1, p.N - 1)
        assert eta[ev.from_site] > 0
        eta[ev.from_site] -= 1
        eta[ev.to_site] += 1
        flux += ev.crossed_boundary
    assert np.array_equal(eta, c.eta)
    assert flux == c.flux
    assert rec.height == height_from_config(c, 1.0)


def test_io_roundtrip(tmp_path):
    p = ModelParams(N=6, gamma=1.0)
    c = Configuration([1, 0, 2, 0, 0, 1])
    st = run_until(c, p, 0.05, seeded_rng(2), record=True)
    write_event_log(tmp_path / "ev.csv", st.events, p, 2)
    assert read_event_log(tmp_path / "ev.csv") == st.events
    write_configuration(tmp_path / "c.csv", c, p, 2)
    back = read_configuration(tmp_path / "c.csv")
    assert np.array_equal(back.eta, c.eta) and back.flux == c.flux and back.time == c.time


def test_right_fraction_matches_asymmetry():
    p = ModelParams(N=10, gamma=3.0, beta=0.5)
    c = Configuration(np.ones(10, dtype=int))
    ev = run_until(c, p, 2.0, seeded_rng(3), record=True).events
    right = np.mean((ev.to_site - ev.from_site) % p.N == 1)
    se = math.sqrt(p.p_right * (1 - p.p_right) / len(ev))
    assert abs(right - p.p_right) < 4 * se


def _generator(states, N, rate, p):
    index = {s: i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    g = rate.table_upto(sum(states[0]))
    for s in states:
        for x in range(N):
            if s[x] == 0:
                continue
            for y, f in (((x + 1) % N, p.right_factor), ((x - 1) % N, p.left_factor)):
                t = list(s)
                t[x] -= 1
                t[y] += 1
                Q[index[s], index[tuple(t)]] += f * g[s[x]]
    Q -= np.diag(Q.sum(axis=1))
    return Q


@pytest.mark.parametrize("rate", [RateFunction.linear(), RateFunction.capped(2),
                                  RateFunction.tabulated([0, 1, 1.5, 1.75])])
def test_transition_law_against_matrix_exponential(rate):
    N, n = 3, 3
    p = ModelParams(N=N, gamma=2.0, beta=0.5, rate=rate)
    states = [s for s in itertools.product(range(n + 1), repeat=N) if sum(s) == n]
    Q = _generator(states, N, rate, p)
    T = 0.02
    start = (2, 1, 0)
    exact = expm(Q * T)[states.index(start)]
    runs = 6000
    counts = np.zeros(len(states))
    for i in range(runs):
        c = Configuration(start, rate)
        run_until(c, p, T, seeded_rng(77, i))
        counts[states.index(tuple(int(v) for v in c.eta))] += 1
    keep = exact * runs >= 5
    obs = np.append(counts[keep], counts[~keep].sum())
    exp_ = np.append(exact[keep], exact[~keep].sum()) * runs
    if exp_[-1] == 0:
        obs, exp_ = obs[:-1], exp_[:-1]
    chi2 = ((obs - exp_) ** 2 / exp_).sum()
    assert stats.chi2.sf(chi2, len(obs) - 1) > 1e-3
