import numpy as np
from hypothesis import given, settings, strategies as st

from zrplab.fenwick import FenwickTree


@settings(deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=40), st.data())
def test_prefix_and_search(values, data):
    vals = np.array(values, dtype=float)
    ft = FenwickTree(vals)
    cum = np.concatenate([[0.0], np.cumsum(vals)])
    for i in range(len(vals) + 1):
        assert ft.prefix(i) == cum[i]
    if cum[-1] > 0:
        u = data.draw(st.floats(0, cum[-1], exclude_max=True))
        pos = ft.find(u)
        assert cum[pos] <= u < cum[pos + 1]
        assert vals[pos] > 0


@settings(deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=20),
       st.lists(st.tuples(st.integers(0, 19), st.integers(0, 5)), max_size=30))
def test_updates_match_rebuild(values, updates):
    ft = FenwickTree(np.array(values, dtype=float))
    vals = np.array(values, dtype=float)
    for i, v in updates:
        i %= len(vals)
        ft.set(i, float(v))
        vals[i] = v
    assert ft.total == vals.sum()
    assert np.allclose([ft.prefix(i) for i in range(len(vals) + 1)],
                       np.concatenate([[0], np.cumsum(vals)]))
