"""Jump-rate functions g(k) for the zero-range process."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LipschitzViolated,
    NonPositiveRate,
    NonZeroAtOrigin,
    NotMonotone,
    RateTableOverflow,
)

KINDS = ("constant", "linear", "capped", "table")


@dataclass(frozen=True, eq=False)
class RateFunction:
    """A rate g: Z>=0 -> R>=0 given in closed form or as a table.

    Closed-form kinds extend on demand to any occupancy; a ``table`` kind
    is only defined for ``k <= len(table) - 1`` and raises
    :class:`RateTableOverflow` beyond that.
    """

    kind: str = "constant"
    cap: int | None = None
    table: np.ndarray | None = field(default=None, repr=False)
    lipschitz_bound: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if self.kind == "capped" and (self.cap is None or self.cap < 1):
            raise ValueError("capped rate needs an integer cap >= 1")
        if self.kind == "table":
            if self.table is None or len(self.table) < 2:
                raise ValueError("table rate needs at least g(0), g(1)")
            object.__setattr__(self, "table", np.asarray(self.table, dtype=float))

    @classmethod
    def constant(cls):
        return cls("constant")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def capped(cls, b):
        return cls("capped", cap=int(b))

    @classmethod
    def tabulated(cls, values, lipschitz_bound=None):
        return cls("table", table=np.asarray(values, dtype=float),
                   lipschitz_bound=lipschitz_bound)

    @property
    def k_max(self):
        """Largest occupancy with a defined rate (``inf`` for closed forms)."""
        if self.kind == "table":
            return len(self.table) - 1
        return np.inf

    @property
    def integer_valued(self):
        if self.kind != "table":
            return True
        return bool(np.all(self.table == np.round(self.table)))

    def table_upto(self, K):
        """Return ``[g(0), ..., g(K)]`` as a float array."""
        K = int(K)
        k = np.arange(K + 1, dtype=float)
        if self.kind == "constant":
            return (k >= 1).astype(float)
        if self.kind == "linear":
            return k
        if self.kind == "capped":
            return np.minimum(k, float(self.cap))
        if K > self.k_max:
            raise RateTableOverflow(
                f"rate table defined up to k={self.k_max}, requested k={K}")
        return self.table[: K + 1].copy()

    def __call__(self, k):
        k = np.asarray(k)
        return self.table_upto(int(k.max()) if k.size else 0)[k]

    def limit_ratio_bound(self):
        """``lim_k g(k)`` for closed forms (``inf`` when unbounded)."""
        if self.kind == "constant":
            return 1.0
        if self.kind == "capped":
            return float(self.cap)
        if self.kind == "linear":
            return np.inf
        return None

    def describe(self):
        if self.kind == "capped":
            return f"capped:{self.cap}"
        if self.kind == "table":
            return "table:" + ";".join(repr(float(v)) for v in self.table)
        return self.kind

    @classmethod
    def parse(cls, text):
        """Inverse of :meth:`describe`."""
        text = text.strip()
        if text in ("constant", "linear"):
            return cls(text)
        name, _, arg = text.partition(":")
        if name == "capped":
            return cls.capped(int(arg))
        if name == "table":
            return cls.tabulated([float(v) for v in arg.split(";")])
        raise ValueError(f"cannot parse rate function {text!r}")


def validate_rate_function(rate, K_max=64):
    """Check g(0) = 0, g(k) > 0 for k >= 1, monotonicity and the Lipschitz bound.

    Constraints are scanned in increasing k and the first violation is
    raised. When ``rate.lipschitz_bound`` is unset the returned function
    carries the observed bound ``max_k |g(k+1) - g(k)|``.
    """
    K = rate.k_max if rate.kind == "table" else K_max
    g = rate.table_upto(K)
    if g[0] != 0:
        raise NonZeroAtOrigin(f"g(0) = {g[0]!r}, expected 0", 0)
    bound = rate.lipschitz_bound
    for k in range(1, len(g)):
        if not g[k] > 0:
            raise NonPositiveRate(f"g({k}) = {g[k]!r} is not positive", k)
        if g[k] < g[k - 1]:
            raise NotMonotone(f"g({k}) = {g[k]!r} < g({k - 1}) = {g[k - 1]!r}", k)
        if bound is not None and abs(g[k] - g[k - 1]) > bound:
            raise LipschitzViolated(
                f"|g({k}) - g({k - 1})| = {abs(g[k] - g[k - 1])!r} exceeds {bound!r}", k)
    if bound is None:
        bound = float(np.max(np.abs(np.diff(g))))
        return RateFunction(rate.kind, rate.cap, rate.table, bound)
    return rate
