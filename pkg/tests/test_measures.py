import math

import numpy as np
import pytest
from scipy import stats

from zrplab.errors import DensityUnreachable, DivergentPartitionFunction, TruncationTooSmall
from zrplab.measures import (
    ProductMeasure,
    build_measure,
    moment_condition_check,
    sample_occupancies,
    solve_fugacity,
    transport_constants,
)
from zrplab.rates import RateFunction


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_closed_form_fugacities(rho):
    geo = solve_fugacity(RateFunction.constant(), rho)
    assert abs(geo.alpha - rho / (1 + rho)) < 1e-10
    poi = solve_fugacity(RateFunction.linear(), rho)
    assert abs(poi.alpha - rho) < 1e-10
    for m in (geo, poi):
        assert abs(m.c - m.alpha) < 1e-10


def test_pmf_matches_scipy():
    m = build_measure(RateFunction.linear(), 1.7)
    k = np.arange(m.K + 1)
    assert np.allclose(m.pmf, stats.poisson.pmf(k, 1.7), atol=1e-14)
    g = build_measure(RateFunction.constant(), 0.5)
    kg = np.arange(g.K + 1)
    assert np.allclose(g.pmf, 0.5 ** (kg + 1), atol=1e-12)
    assert g.chi == pytest.approx(2.0, abs=1e-10)


def test_geometric_transport_constants():
    m = solve_fugacity(RateFunction.constant(), 1.0)
    tc = transport_constants(m, RateFunction.constant())
    # c(rho) = rho / (1 + rho)
    assert tc.c == pytest.approx(0.5, abs=1e-12)
    assert tc.c_prime == pytest.approx(0.25, abs=1e-12)
    assert tc.c_prime_fd == pytest.approx(0.25, abs=1e-8)
    assert tc.c_second == pytest.approx(-0.25, abs=1e-5)
    assert m.c_second == pytest.approx(-0.25, abs=1e-10)


def test_capped_rate_fd_agrees_with_identity():
    rate = RateFunction.capped(3)
    m = solve_fugacity(rate, 1.3)
    tc = transport_constants(m, rate)
    assert tc.c_prime_fd == pytest.approx(tc.c_prime_identity, rel=1e-7)
    assert tc.c_second == pytest.approx(m.c_second, rel=1e-4, abs=1e-6)


def test_divergence_and_unreachable():
    with pytest.raises(DivergentPartitionFunction):
        build_measure(RateFunction.constant(), 1.0)
    with pytest.raises(TruncationTooSmall):
        build_measure(RateFunction.constant(), 0.9, K=5)
    with pytest.raises(DensityUnreachable):
        solve_fugacity(RateFunction.tabulated([0, 1, 1]), 5.0)


def test_zero_density_warns():
    m = solve_fugacity(RateFunction.constant(), 0.0)
    assert m.K == 0 and m.chi == 0
    with pytest.warns(RuntimeWarning):
        tc = transport_constants(m, RateFunction.constant())
    # c(rho) = rho/(1+rho) has slope 1 at 0
    assert tc.c_prime == pytest.approx(1.0, abs=1e-5)


def test_sampler_chi_square(rng):
    m = solve_fugacity(RateFunction.constant(), 1.0)
    s = sample_occupancies(m, (200000,), rng)
    K = 12
    obs = np.bincount(np.minimum(s, K), minlength=K + 1)
    exp_ = np.append(m.pmf[:K], m.pmf[K:].sum()) * s.size
    assert stats.chisquare(obs, exp_).pvalue > 1e-3


def test_moment_condition():
    assert moment_condition_check(build_measure(RateFunction.constant(), 0.5), 1.0)
    k = np.arange(1, 4000, dtype=float)
    heavy = ProductMeasure.from_pmf(np.concatenate([[0.0], k ** -3.5]))
    assert not moment_condition_check(heavy, 1.0)
    light = ProductMeasure.from_pmf(np.concatenate([[0.0], k ** -6.0]))
    assert moment_condition_check(light, 1.0)


def test_csv(tmp_path, geo_measure):
    geo_measure.to_csv(tmp_path / "m.csv")
    data = np.loadtxt(tmp_path / "m.csv", delimiter=",", skiprows=2)
    assert np.allclose(data[:, 1], geo_measure.pmf)
