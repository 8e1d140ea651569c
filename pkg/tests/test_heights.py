import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zrplab.errors import InconsistentEvent
from zrplab.heights import (
    HeightField,
    TestFunction,
    field_by_sbp,
    fluctuation_field,
    height_from_config,
    update_height_on_event,
    write_field_series,
)
from zrplab.zrp import Configuration, JumpEvent, ModelParams, run_until, seeded_rng

configs = st.lists(st.integers(0, 4), min_size=2, max_size=24)


@settings(deadline=None, max_examples=60)
@given(configs, st.integers(-5, 5), st.floats(0, 3), st.sampled_from(["cos", "sin"]),
       st.integers(1, 4), st.floats(0.0, 2.0))
def test_summation_by_parts_identity(eta, flux, T, kind, k, gamma):
    eta = np.array(eta)
    N = len(eta)
    rho = 1.0
    p = ModelParams(N=N, gamma=gamma, beta=0.5, rho=rho)
    J = getattr(TestFunction, kind)(k)
    c = Configuration(eta, time=T, flux=flux)
    direct = fluctuation_field(c, J, T, p, 0.25).value
    sbp = field_by_sbp(height_from_config(c, rho), J, T, p, 0.25).value
    assert sbp == pytest.approx(direct, abs=1e-9 * (1 + abs(direct)))


def test_height_values_and_flux():
    c = Configuration([2, 0, 1, 1], flux=3)
    h = height_from_config(c, 1.0)
    assert list(h.prefix) == [3, 5, 5, 6, 7]
    assert np.allclose(h.values, (np.array([3, 5, 5, 6, 7]) - np.arange(5)) / 2)
    assert list(h.occupancies) == [2, 0, 1, 1]


def test_event_update_matches_recompute():
    p = ModelParams(N=6, gamma=1.0)
    c = Configuration([1, 2, 0, 0, 1, 1])
    h = height_from_config(c, 1.0)
    log = run_until(c, p, 0.3, seeded_rng(8), record=True).events
    for ev in log:
        h = update_height_on_event(h, ev)
    assert h == height_from_config(c, 1.0)


def test_inconsistent_events():
    h = height_from_config(Configuration([1, 0, 0, 1]), 0.5)
    with pytest.raises(InconsistentEvent):
        update_height_on_event(h, JumpEvent(0.0, 1, 2, 0))  # empty site
    with pytest.raises(InconsistentEvent):
        update_height_on_event(h, JumpEvent(0.0, 0, 2, 0))  # not neighbours
    with pytest.raises(InconsistentEvent):
        update_height_on_event(h, JumpEvent(0.0, 3, 0, 0))  # missing boundary flag
    out = update_height_on_event(h, JumpEvent(0.0, 3, 0, -1))
    assert out.prefix[0] == -1 and out.prefix[4] == 1


def test_boundary_flux_convention():
    # leftward crossing 0 -> N-1 adds one unit of flux
    c = Configuration([1, 0, 0])
    h = update_height_on_event(height_from_config(c, 0.0), JumpEvent(0.0, 0, 2, 1))
    assert h.flux0 == 1


def test_test_function_from_table():
    xs = np.arange(16) / 16
    J = TestFunction.from_table(np.cos(2 * np.pi * 3 * xs) + 0.5 * np.sin(2 * np.pi * xs))
    x = np.linspace(0, 1, 37)
    assert np.allclose(J(x), np.cos(6 * np.pi * x) + 0.5 * np.sin(2 * np.pi * x))
    assert np.allclose(J.derivative(x),
                       -6 * np.pi * np.sin(6 * np.pi * x) + np.pi * np.cos(2 * np.pi * x))


def test_zero_config_field_and_constant_shift():
    p = ModelParams(N=8, rho=1.0)
    c = Configuration(np.ones(8, dtype=int))
    assert fluctuation_field(c, TestFunction.cos(1), 0.0, p, 0.25).value == pytest.approx(0)


def test_field_series_csv(tmp_path):
    p = ModelParams(N=8, gamma=1.0)
    c = Configuration([1, 0, 2, 0, 1, 1, 0, 3])
    s = [fluctuation_field(c, TestFunction.sin(1), t, p, 0.25) for t in (0.0, 0.1)]
    write_field_series(tmp_path / "f.csv", s, 1, 5)
    rows = open(tmp_path / "f.csv").read().splitlines()
    assert rows[1] == "T,value,mode,seed" and len(rows) == 4
    assert s[1].drift_offset == pytest.approx(1.0 * 8 ** 0.5 * 0.25 * 0.1)
