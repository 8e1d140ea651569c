"""Binary indexed tree over per-site rates.

The jitted functions operate on a raw 1-indexed ``tree`` array of length
``n + 1`` so the simulation kernels can inline them; :class:`FenwickTree`
wraps them for use from Python.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def fw_build(values):
    n = values.shape[0]
    tree = np.zeros(n + 1)
    for i in range(1, n + 1):
        tree[i] += values[i - 1]
        j = i + (i & -i)
        if j <= n:
            tree[j] += tree[i]
    return tree


@njit(cache=True)
def fw_add(tree, i, delta):
    n = tree.shape[0] - 1
    j = i + 1
    while j <= n:
        tree[j] += delta
        j += j & -j


@njit(cache=True)
def fw_prefix(tree, i):
    """Sum of the first ``i`` values."""
    s = 0.0
    j = i
    while j > 0:
        s += tree[j]
        j -= j & -j
    return s


@njit(cache=True)
def fw_search(tree, u):
    """Index ``i`` with ``prefix(i) <= u < prefix(i + 1)``.

    Zero-weight entries are never returned for ``0 <= u < total``. A
    return value of ``n`` signals ``u >= total`` (rounding at the top).
    """
    n = tree.shape[0] - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    pos = 0
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        step >>= 1
    return pos


class FenwickTree:
    """Prefix-summable rates with O(log n) update and sampling."""

    def __init__(self, values):
        self.values = np.array(values, dtype=float)
        self.tree = fw_build(self.values)

    def __len__(self):
        return self.values.shape[0]

    @property
    def total(self):
        return fw_prefix(self.tree, len(self))

    def prefix(self, i):
        return fw_prefix(self.tree, i)

    def set(self, i, value):
        fw_add(self.tree, i, value - self.values[i])
        self.values[i] = value

    def find(self, u):
        """Index selected by a uniform ``u`` scaled to ``[0, total)``."""
        i = fw_search(self.tree, u)
        if i >= len(self):
            i = int(np.flatnonzero(self.values > 0)[-1])
        return i

    def rebuild(self):
        self.tree = fw_build(self.values)
