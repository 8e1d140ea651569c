import math

import numpy as np
import pytest

from zrplab.errors import NonpositiveField, StabilityViolated
from zrplab.experiments import mshe_heat_convergence
from zrplab.heights import TestFunction
from zrplab.spde import (
    ADDITIVE,
    DERIVATIVE,
    GridField,
    SpectralField,
    ashe_step,
    cole_hopf_pairing,
    draw_noise,
    euler_maruyama_mode,
    feller_check_ashe,
    feller_check_sbe,
    heat_spectral,
    mshe_evolve,
    mshe_step,
    ou_mode_series,
    stationary_variance,
    write_trajectory,
)
from zrplab.zrp import seeded_rng


def _random_field(K, a, b, rng, kind=DERIVATIVE):
    pos = rng.standard_normal(K + 1) + 1j * rng.standard_normal(K + 1)
    return SpectralField.from_positive(pos, a, b, kind)


def _cos_modes(K, k, amp=1.0):
    J = np.zeros(2 * K + 1, dtype=complex)
    J[K + k] = J[K - k] = 0.5 * amp
    return J


def test_pure_decay_without_noise():
    rng = np.random.default_rng(0)
    f = _random_field(8, 0.3, 0.0, rng)
    g = f
    for _ in range(10):
        g = ashe_step(g, 0.01, rng)
    ks = f.ks
    expect = f.modes * np.exp(-0.3 * (2 * np.pi * ks) ** 2 * 0.1)
    assert np.allclose(g.modes, expect, rtol=1e-13, atol=1e-15)
    assert g.t == pytest.approx(0.1)


def test_symmetry_and_mode_zero():
    rng = np.random.default_rng(1)
    f = _random_field(6, 0.2, 0.7, rng)
    m0 = f.mode(0)
    for _ in range(50):
        f = ashe_step(f, 0.003, rng)
        assert f.is_conjugate_symmetric()
    # derivative noise and Laplacian both annihilate constants
    assert f.mode(0) == m0
    h = ashe_step(_random_field(6, 0.2, 0.7, rng, ADDITIVE), 0.01, rng)
    assert h.is_conjugate_symmetric()


def test_stationary_variance_against_euler_maruyama():
    a, b, k = 0.25, 0.6, 1
    v = stationary_variance(k, a, b)
    assert v == pytest.approx(b * b / (2 * a))
    lam = a * (2 * np.pi) ** 2
    rng = seeded_rng(2)
    # exact OU steps, long horizon
    exact = ou_mode_series(0.0, a, b, k, 0.05, 40, rng, size=20000)[:, -1]
    # brute-force oracle with dt << 1/lam
    em = euler_maruyama_mode(0.0, a, b, k, 2e-3 / lam, int(8 / (2e-3)), rng, size=20000)
    for sample in (exact, em):
        s2 = np.mean(np.abs(sample) ** 2)
        se = np.std(np.abs(sample) ** 2) / math.sqrt(sample.size)
        assert abs(s2 - v) < 4 * se + 0.01 * v


def test_shared_noise_difference_is_heat_flow():
    rng = np.random.default_rng(3)
    K, a = 5, 0.125
    f1 = _random_field(K, a, 0.9, rng)
    f2 = _random_field(K, a, 0.9, rng)
    g1, g2 = f1, f2
    for _ in range(20):
        xi = draw_noise(K, rng)
        g1 = ashe_step(g1, 0.01, noise=xi)
        g2 = ashe_step(g2, 0.01, noise=xi)
    expect = (f1.modes - f2.modes) * np.exp(-a * (2 * np.pi * f1.ks) ** 2 * 0.2)
    assert np.allclose(g1.modes - g2.modes, expect, rtol=1e-12, atol=1e-14)


def test_feller_ashe_mode_one_closed_form():
    K, a = 8, 0.125
    pos = np.zeros(K + 1, dtype=complex)
    pos[1] = 0.3
    r = feller_check_ashe(SpectralField.from_positive(pos, a, 1.0), SpectralField.zeros(K, a, 1.0),
                          _cos_modes(K, 1), 1.0, seed=4)
    assert r.distance0 == pytest.approx(0.3, abs=1e-15)
    assert abs(r.distanceT - 0.3 * math.exp(-math.pi ** 2 / 2)) <= 1e-12


def test_feller_ashe_zero_gap_and_split_modes():
    K, a = 8, 0.05
    rng = np.random.default_rng(5)
    f = _random_field(K, a, 1.0, rng)
    J = _cos_modes(K, 1) + _cos_modes(K, 3, 0.5)
    r = feller_check_ashe(f, f.copy(), J, 0.5, seed=6)
    assert r.distance0 == 0 and r.distanceT == 0
    pos = np.zeros(K + 1, dtype=complex)
    pos[1], pos[3] = 0.2, 0.1
    r = feller_check_ashe(SpectralField.from_positive(pos, a, 1.0), SpectralField.zeros(K, a, 1.0),
                          J, 0.5, seed=7)
    expect = 0.2 * math.exp(-a * (2 * math.pi) ** 2 * 0.5) + 0.5 * 0.1 * math.exp(-a * (6 * math.pi) ** 2 * 0.5)
    assert abs(r.distanceT - expect) < 1e-12
    assert abs(r.predicted - expect) < 1e-12


def test_grid_round_trip():
    x = np.arange(32) / 32
    v = 0.4 * np.cos(2 * np.pi * x) - 0.2 * np.sin(6 * np.pi * x)
    f = SpectralField.from_grid(v, 8, 1.0, 1.0)
    assert np.allclose(f.to_grid(32), v, atol=1e-14)
    assert f.pair_cos(1) == pytest.approx(0.2)
    assert f.pair_sin(3) == pytest.approx(-0.1)


def test_mshe_stability_guard():
    f = GridField(np.ones(16), 1.0, 1.0)
    with pytest.raises(StabilityViolated):
        mshe_step(f, 1.0 / (2 * 16 ** 2) * 1.01, np.random.default_rng(0))
    mshe_step(f, 1.0 / (2 * 16 ** 2), np.random.default_rng(0))


def test_mshe_heat_order():
    errs, order = mshe_heat_convergence([32, 64, 128], 0.05)
    assert np.all(np.diff(errs) < 0)
    assert order >= 0.9


def test_heat_spectral_is_exact_for_modes():
    x = np.arange(64) / 64
    v = 1 + 0.3 * np.cos(4 * np.pi * x)
    out = heat_spectral(v, 0.5, 0.1)
    assert np.allclose(out, 1 + 0.3 * math.exp(-0.5 * (4 * math.pi) ** 2 * 0.1) * np.cos(4 * np.pi * x))


def test_mshe_mean_is_martingale():
    M, E = 32, 4000
    f = GridField(np.ones((E, M)), 0.5, 1.0)
    f = mshe_evolve(f, 0.02, 0.25 / M ** 2, seeded_rng(8))
    means = f.values.mean(axis=1)
    assert abs(means.mean() - 1.0) < 4 * means.std() / math.sqrt(E)


def test_mshe_mean_solves_heat():
    M, E = 32, 4000
    x = np.arange(M) / M
    z0 = 1 + 0.5 * np.cos(2 * np.pi * x)
    f = mshe_evolve(GridField(np.tile(z0, (E, 1)), 0.5, 1.0), 0.01, 0.25 / M ** 2, seeded_rng(9))
    det = mshe_evolve(GridField(z0, 0.0, 1.0), 0.01, 0.25 / M ** 2, None)
    se = f.values.std(axis=0) / math.sqrt(E)
    assert np.all(np.abs(f.values.mean(axis=0) - det.values) < 4.5 * se)


def test_mshe_positivity_audit():
    M, E = 128, 200
    x = np.arange(M) / M
    z0 = np.exp(0.5 * np.sin(2 * np.pi * x))
    f = mshe_evolve(GridField(np.tile(z0, (E, 1)), 0.5, 1.0), 0.01, 0.25 / M ** 2, seeded_rng(10))
    assert f.nonpositive.mean() < 0.01


def test_cole_hopf_properties():
    M = 256
    x = np.arange(M) / M
    J = TestFunction.cos(1)
    assert cole_hopf_pairing(GridField(np.full(M, 3.7)), J) == pytest.approx(0.0, abs=1e-12)
    h = 0.3 * np.sin(2 * np.pi * x) + 0.1 * np.cos(4 * np.pi * x)
    dh = 0.3 * 2 * np.pi * np.cos(2 * np.pi * x) - 0.1 * 4 * np.pi * np.sin(4 * np.pi * x)
    Z = np.exp(h)
    assert cole_hopf_pairing(GridField(Z), J) == pytest.approx(np.mean(J(x) * dh), abs=1e-10)
    # homogeneity in log Z and linearity in J
    assert cole_hopf_pairing(GridField(Z ** 2.5), J) == pytest.approx(2.5 * cole_hopf_pairing(Z, J))
    J2 = TestFunction.sin(2)
    lhs = cole_hopf_pairing(Z, TestFunction.from_callable(lambda s: J(s) + 2 * J2(s),
                                                          lambda s: J.derivative(s) + 2 * J2.derivative(s)))
    assert lhs == pytest.approx(cole_hopf_pairing(Z, J) + 2 * cole_hopf_pairing(Z, J2))
    with pytest.raises(NonpositiveField):
        cole_hopf_pairing(GridField(np.r_[Z[:-1], 0.0]), J)


def test_cole_hopf_quadrature_order():
    # a non-bandlimited log Z; the periodic rectangle rule is within O(dx^2)
    # (in fact spectrally accurate)
    errs = []
    for M in (16, 32, 64):
        x = np.arange(M) / M
        h = 1.0 / (1.2 + np.cos(2 * np.pi * x))
        xf = np.arange(4096) / 4096
        dh = 2 * np.pi * np.sin(2 * np.pi * xf) / (1.2 + np.cos(2 * np.pi * xf)) ** 2
        exact = np.mean(np.cos(2 * np.pi * xf) * dh)
        errs.append(abs(cole_hopf_pairing(np.exp(h), TestFunction.cos(1)) - exact))
    for M, e in zip((16, 32, 64), errs):
        assert e <= (1.0 / M) ** 2


def test_feller_sbe_identical_and_monotone():
    M = 32
    x = np.arange(M) / M
    Z0 = np.exp(0.5 * np.sin(2 * np.pi * x))
    J = TestFunction.cos(1)
    same = feller_check_sbe(Z0, J, 0.02, 11, 100, 0.0)
    assert same.output_ms == 0.0 and same.input_ms == 0.0
    res = [feller_check_sbe(Z0, J, 0.02, 12, 200, e) for e in (0.2, 0.1, 0.05)]
    for r1, r2 in zip(res, res[1:]):
        assert r1.output_ms - r2.output_ms > 3 * math.hypot(r1.output_se, r2.output_se)
    ratios = np.array([r.output_ms / r.input_ms for r in res])
    # Gronwall-type bound: the fitted constant is stable along the sequence
    assert ratios.max() / ratios.min() < 1.5
    assert all(r.flagged == 0 for r in res)


def test_trajectory_csv(tmp_path):
    p = tmp_path / "traj.csv"
    write_trajectory(p, [0.0, 0.1], [1, 1], [0.5, 0.25], seed=3)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# seed=3")
    assert lines[1] == "t,index,value"
    assert len(lines) == 4
