"""Height function, density fluctuation field and their summation by parts.

Heights are kept as integers: ``prefix[x] = sum_{y<x} eta_y + flux`` for
the cuts x = 0..N, and the fluctuation-scale values
``(prefix[x] - rho x) / sqrt(N)`` are produced on read. A leftward
crossing of cut x raises ``prefix[x]`` by one, a rightward crossing lowers
it; the boundary cut appears twice (x = 0 and x = N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentEvent


@dataclass(eq=False)
class HeightField:
    prefix: np.ndarray
    rho: float
    T: float = 0.0

    @property
    def N(self):
        return self.prefix.shape[0] - 1

    @property
    def flux0(self):
        return int(self.prefix[0])

    @property
    def values(self):
        x = np.arange(self.N + 1)
        return (self.prefix - self.rho * x) / math.sqrt(self.N)

    @property
    def occupancies(self):
        return np.diff(self.prefix)

    def copy(self):
        return HeightField(self.prefix.copy(), self.rho, self.T)

    def __eq__(self, other):
        return (isinstance(other, HeightField) and self.rho == other.rho
                and np.array_equal(self.prefix, other.prefix))

    def to_csv(self, path, header=""):
        with open(path, "w") as fh:
            fh.write(f"# rho={self.rho!r} T={self.T!r} flux0={self.flux0} {header}\n")
            fh.write("x,H\n")
            for x, h in enumerate(self.values):
                fh.write(f"{x},{float(h)!r}\n")


def height_from_config(config, rho, flux0=None):
    """Height of a configuration; ``flux0`` defaults to the config's own flux."""
    eta = config.eta if hasattr(config, "eta") else np.asarray(config)
    if flux0 is None:
        flux0 = getattr(config, "flux", 0)
    prefix = np.empty(eta.shape[0] + 1, dtype=np.int64)
    prefix[0] = 0
    np.cumsum(eta, out=prefix[1:])
    prefix += int(flux0)
    return HeightField(prefix, float(rho), float(getattr(config, "time", 0.0)))


def update_height_on_event(height, event):
    """Height after one jump; exactly one cut (two entries at the boundary) moves."""
    N = height.N
    x, y, flag = event.from_site, event.to_site, event.crossed_boundary
    if not (0 <= x < N and 0 <= y < N):
        raise InconsistentEvent(f"sites {x}->{y} outside the torus of size {N}")
    if height.prefix[x + 1] - height.prefix[x] < 1:
        raise InconsistentEvent(f"no particle at site {x}")
    out = height.copy()
    out.T = event.time
    if y == (x + 1) % N:
        expected = -1 if x == N - 1 else 0
        if flag != expected:
            raise InconsistentEvent(f"boundary flag {flag} for rightward jump {x}->{y}")
        if x == N - 1:
            out.prefix[0] -= 1
            out.prefix[N] -= 1
        else:
            out.prefix[x + 1] -= 1
    elif y == (x - 1) % N:
        expected = 1 if x == 0 else 0
        if flag != expected:
            raise InconsistentEvent(f"boundary flag {flag} for leftward jump {x}->{y}")
        if x == 0:
            out.prefix[0] += 1
            out.prefix[N] += 1
        else:
            out.prefix[x] += 1
    else:
        raise InconsistentEvent(f"sites {x} and {y} are not neighbours")
    return out


class HeightRecorder:
    """Observer keeping a height field in sync with a running simulation."""

    def __init__(self, config, rho):
        self.height = height_from_config(config, rho)

    def on_events(self, log, config):
        N = self.height.N
        prefix = self.height.prefix
        right = (log.to_site == (log.from_site + 1) % N)
        cut = np.where(right, log.from_site + 1, log.from_site)
        delta = np.where(right, -1, 1)
        interior = (cut > 0) & (cut < N)
        np.add.at(prefix, cut[interior], delta[interior])
        boundary = delta[~interior].sum()
        prefix[0] += boundary
        prefix[N] += boundary
        self.height.T = config.time


@dataclass(frozen=True)
class TestFunction:
    """Smooth periodic test function J on [0, 1).

    ``kind`` is ``"cos"``/``"sin"`` (mode ``k``, amplitude ``scale``) or
    ``"callable"`` with explicit ``func`` and ``deriv``. Tabulated data are
    turned into a trigonometric interpolant by :meth:`from_table`.
    """

    __test__ = False

    kind: str
    k: int = 1
    scale: float = 1.0
    func: object = field(default=None, repr=False, compare=False)
    deriv: object = field(default=None, repr=False, compare=False)

    @classmethod
    def cos(cls, k, scale=1.0):
        return cls("cos", int(k), float(scale))

    @classmethod
    def sin(cls, k, scale=1.0):
        return cls("sin", int(k), float(scale))

    @classmethod
    def from_callable(cls, func, deriv):
        return cls("callable", 0, 1.0, func, deriv)

    @classmethod
    def from_table(cls, values):
        """Trigonometric interpolant of samples on the uniform grid i/M."""
        values = np.asarray(values, dtype=float)
        M = values.shape[0]
        coef = np.fft.rfft(values) / M
        ks = np.arange(coef.shape[0])
        if M % 2 == 0:
            coef[-1] *= 0.5  # Nyquist mode split between +-M/2

        def func(x):
            x = np.asarray(x, dtype=float)[..., None]
            ph = np.exp(2j * np.pi * ks * x)
            out = coef[0].real + 2 * np.real(np.sum(coef[1:] * ph[..., 1:], axis=-1))
            return out

        def deriv(x):
            x = np.asarray(x, dtype=float)[..., None]
            ph = np.exp(2j * np.pi * ks * x)
            return 2 * np.real(np.sum((2j * np.pi * ks[1:]) * coef[1:] * ph[..., 1:], axis=-1))

        return cls("callable", 0, 1.0, func, deriv)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "cos":
            return self.scale * np.cos(2 * np.pi * self.k * x)
        if self.kind == "sin":
            return self.scale * np.sin(2 * np.pi * self.k * x)
        return np.asarray(self.func(np.mod(x, 1.0)), dtype=float)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        w = 2 * np.pi * self.k
        if self.kind == "cos":
            return -self.scale * w * np.sin(w * x)
        if self.kind == "sin":
            return self.scale * w * np.cos(w * x)
        return np.asarray(self.deriv(np.mod(x, 1.0)), dtype=float)

    def lattice(self, N, shift=0.0):
        """J((x - shift)/N ...) evaluated as J(x/N - shift mod 1), x = 0..N-1."""
        return self(np.mod(np.arange(N) / N - shift, 1.0))


@dataclass(frozen=True)
class FieldSample:
    value: float
    T: float
    drift_offset: float


def drift_offset(params, c_prime, T):
    """gamma N^(1-beta) c'_rho T, the frame shift at time T."""
    return params.frame_speed_factor * c_prime * T


def fluctuation_field(config, J, T, params, c_prime):
    """N^-1/2 sum_x (eta_x - rho) J(x/N - gamma N^(1-beta) c' T)."""
    eta = config.eta if hasattr(config, "eta") else np.asarray(config)
    N = eta.shape[0]
    d = drift_offset(params, c_prime, T)
    Jx = J.lattice(N, d % 1.0)
    return FieldSample(float(np.dot(eta - params.rho, Jx)) / math.sqrt(N), T, d)


def field_by_sbp(height, J, T, params, c_prime):
    """The fluctuation field from heights by exact Abel summation.

    Y = -sum_{x=1}^{N} H_x [J_x - J_{x-1}] + (H_N - H_0) J_0, with
    J_x = J(x/N - drift); the last term is the winding correction and
    vanishes when the particle count is rho N.
    """
    N = height.N
    d = drift_offset(params, c_prime, T)
    Jx = J.lattice(N, d % 1.0)
    Jext = np.append(Jx, Jx[0])
    H = height.values
    value = -np.dot(H[1:], Jext[1:] - Jext[:-1]) + (H[N] - H[0]) * Jext[0]
    return FieldSample(float(value), T, d)


def write_field_series(path, samples, k, seed, header=""):
    with open(path, "w") as fh:
        fh.write(f"# mode={k} seed={seed} {header}\n")
        fh.write("T,value,mode,seed\n")
        for s in samples:
            fh.write(f"{float(s.T)!r},{float(s.value)!r},{k},{seed}\n")
