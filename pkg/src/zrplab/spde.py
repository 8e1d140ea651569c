"""Continuum solvers: exact spectral OU for (the derivative of) the additive
stochastic heat equation, Euler-Maruyama for the multiplicative-noise SHE,
and the Cole-Hopf pairing.

Noise convention: the real space-time white noise on the circle has
independent standard Brownian motions on the basis {1, sqrt2 cos, sqrt2 sin}.
In complex Fourier coefficients W_k = int W e^{-2 pi i k x} dx this means
E|dW_k|^2 = dt for every k, with W_0 real and W_{-k} = conj(W_k).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveField, StabilityViolated

ADDITIVE = "additive"
DERIVATIVE = "derivative"


@dataclass(eq=False)
class SpectralField:
    """Fourier modes Y_k, k = -K..K, stored at index k + K.

    ``kind`` is ``"derivative"`` (noise b d_x W) or ``"additive"`` (noise b W).
    """

    modes: np.ndarray
    a: float
    b: float
    kind: str = DERIVATIVE
    t: float = 0.0

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=complex)
        if self.modes.ndim != 1 or self.modes.shape[0] % 2 != 1:
            raise ValueError("modes must have odd length 2K + 1")
        if self.kind not in (ADDITIVE, DERIVATIVE):
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def K(self):
        return (self.modes.shape[0] - 1) // 2

    @property
    def ks(self):
        return np.arange(-self.K, self.K + 1)

    def mode(self, k):
        return self.modes[k + self.K]

    def copy(self):
        return SpectralField(self.modes.copy(), self.a, self.b, self.kind, self.t)

    def is_conjugate_symmetric(self, tol=0.0):
        m = self.modes
        return bool(np.all(np.abs(m - np.conj(m[::-1])) <= tol))

    @classmethod
    def zeros(cls, K, a, b, kind=DERIVATIVE):
        return cls(np.zeros(2 * K + 1, dtype=complex), a, b, kind)

    @classmethod
    def from_positive(cls, pos, a, b, kind=DERIVATIVE, t=0.0):
        """Build from modes k = 0..K; negatives filled by conjugation."""
        pos = np.asarray(pos, dtype=complex).copy()
        pos[0] = pos[0].real
        modes = np.concatenate([np.conj(pos[:0:-1]), pos])
        return cls(modes, a, b, kind, t)

    @classmethod
    def from_grid(cls, values, K, a, b, kind=DERIVATIVE):
        """Modes of grid samples on i/M (rectangle rule, exact for |k| < M/2)."""
        values = np.asarray(values, dtype=float)
        c = np.fft.rfft(values) / values.shape[0]
        if K >= c.shape[0]:
            c = np.concatenate([c, np.zeros(K + 1 - c.shape[0])])
        return cls.from_positive(c[:K + 1], a, b, kind)

    def pair(self, J_modes):
        """<Y, J> for J given by its modes at k = -K..K (J real)."""
        return float(np.real(np.sum(self.modes * np.conj(J_modes))))

    def pair_cos(self, k):
        """<Y, cos(2 pi k x)> = Re Y_k (k >= 1)."""
        return float(self.mode(k).real)

    def pair_sin(self, k):
        """<Y, sin(2 pi k x)> = -Im Y_k (k >= 1)."""
        return float(-self.mode(k).imag)

    def to_grid(self, M):
        """Real field on the grid i/M."""
        c = np.zeros(M // 2 + 1, dtype=complex)
        top = min(self.K, M // 2)
        c[:top + 1] = self.modes[self.K:self.K + top + 1]
        return np.fft.irfft(c * M, n=M)


def _decay_rates(K, a):
    k = np.arange(K + 1)
    return a * (2 * np.pi * k) ** 2


def ou_step_variance(K, a, b, dt, kind=DERIVATIVE):
    """E|increment_k|^2 for k = 0..K of one exact OU step."""
    lam = _decay_rates(K, a)
    k = np.arange(K + 1)
    amp2 = b * b * ((2 * np.pi * k) ** 2 if kind == DERIVATIVE else np.ones(K + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = amp2 * -np.expm1(-2 * lam * dt) / (2 * lam)
    v[lam == 0] = amp2[lam == 0] * dt
    return v


def stationary_variance(k, a, b, kind=DERIVATIVE):
    """E|Y_k|^2 in the stationary state, k != 0."""
    amp2 = b * b * ((2 * np.pi * k) ** 2 if kind == DERIVATIVE else 1.0)
    return amp2 / (2 * a * (2 * np.pi * k) ** 2)


def draw_noise(K, rng, size=None):
    """Standard complex Gaussians for k = 0..K (E|xi|^2 = 1, xi_0 real)."""
    shape = (K + 1,) if size is None else (size, K + 1)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    z[..., 0] = rng.standard_normal(shape[:-1]) if size is not None else rng.standard_normal()
    return z


def ashe_step(field, dt, rng=None, noise=None):
    """Exact OU transition over ``dt`` for every mode.

    ``noise`` (standard complex Gaussians, modes 0..K) can be given to share
    one noise realisation between several fields; otherwise it is drawn
    from ``rng``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    K = field.K
    if noise is None:
        noise = draw_noise(K, rng)
    lam = _decay_rates(K, field.a)
    pos = field.modes[K:] * np.exp(-lam * dt)
    pos = pos + np.sqrt(ou_step_variance(K, field.a, field.b, dt, field.kind)) * noise
    return SpectralField.from_positive(pos, field.a, field.b, field.kind, field.t + dt)


def ashe_evolve(field, T, n_steps, rng, record_modes=None):
    """Advance with ``n_steps`` exact steps; optionally record given modes."""
    dt = T / n_steps
    out = []
    f = field
    for _ in range(n_steps):
        f = ashe_step(f, dt, rng)
        if record_modes is not None:
            out.append(f.modes[f.K + np.asarray(record_modes)].copy())
    return f, (np.array(out) if record_modes is not None else None)


def ou_mode_series(y0, a, b, k, dt, n, rng, kind=DERIVATIVE, size=None):
    """Exact time series of one complex mode (vectorised over ``size`` paths)."""
    lam = a * (2 * np.pi * k) ** 2
    v = ou_step_variance(k, a, b, dt, kind)[k]
    shape = (n + 1,) if size is None else (size, n + 1)
    out = np.empty(shape, dtype=complex)
    out[..., 0] = y0
    decay = math.exp(-lam * dt)
    sd = math.sqrt(v / 2)
    for i in range(n):
        z = rng.standard_normal(shape[:-1] + (2,))
        out[..., i + 1] = decay * out[..., i] + sd * (z[..., 0] + 1j * z[..., 1])
    return out


def euler_maruyama_mode(y0, a, b, k, dt, n, rng, kind=DERIVATIVE, size=None):
    """Brute-force Euler-Maruyama for one mode; an oracle for the exact step."""
    lam = a * (2 * np.pi * k) ** 2
    amp = b * (2 * np.pi * k if kind == DERIVATIVE else 1.0)
    shape = () if size is None else (size,)
    y = np.full(shape, y0, dtype=complex)
    sd = amp * math.sqrt(dt / 2)
    for _ in range(n):
        z = rng.standard_normal(shape + (2,))
        y = y - lam * y * dt + sd * (z[..., 0] + 1j * z[..., 1])
    return y


@dataclass(eq=False)
class GridField:
    """Z on the grid i/M, i = 0..M-1, for the multiplicative-noise SHE.

    ``values`` may carry leading ensemble dimensions; the last axis is space.
    """

    values: np.ndarray
    lam: float = 1.0
    a: float = 1.0
    t: float = 0.0
    nonpositive: np.ndarray | bool = field(default=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.ndim(self.nonpositive) == 0 and self.values.ndim > 1:
            self.nonpositive = np.zeros(self.values.shape[:-1], dtype=bool)

    @property
    def M(self):
        return self.values.shape[-1]

    @property
    def dx(self):
        return 1.0 / self.M

    @property
    def xs(self):
        return np.arange(self.M) / self.M

    def copy(self):
        nonpos = self.nonpositive.copy() if isinstance(self.nonpositive, np.ndarray) else self.nonpositive
        return GridField(self.values.copy(), self.lam, self.a, self.t, nonpos)


def laplacian(values, dx):
    return (np.roll(values, 1, axis=-1) - 2 * values + np.roll(values, -1, axis=-1)) / dx ** 2


def grid_noise(shape, dt, dx, rng):
    """Discrete space-time white noise increments, N(0, dt/dx) per cell."""
    return rng.standard_normal(shape) * math.sqrt(dt / dx)


def mshe_step(field, dt, rng=None, noise=None):
    """One explicit Euler-Maruyama step Z += a dt Lap Z + lam sqrt(a) Z dW.

    Raises :class:`StabilityViolated` if dt > dx^2/(2a). Nonpositive values
    are flagged on the returned field, not raised.
    """
    dx = field.dx
    if dt > dx * dx / (2 * field.a) * (1 + 1e-12):
        raise StabilityViolated(f"dt={dt:g} exceeds dx^2/(2a)={dx * dx / (2 * field.a):g}")
    Z = field.values
    out = Z + field.a * dt * laplacian(Z, dx)
    if field.lam != 0:
        if noise is None:
            noise = grid_noise(Z.shape[-1:] if Z.ndim == 1 else Z.shape, dt, dx, rng)
        out = out + field.lam * math.sqrt(field.a) * Z * noise
    nonpos = np.any(out <= 0, axis=-1) | field.nonpositive
    return GridField(out, field.lam, field.a, field.t + dt, nonpos)


def mshe_evolve(field, T, dt, rng, noise_shape=None):
    """Advance to ``T`` with steps ``dt`` (last step shortened).

    ``noise_shape`` broadcasts one noise draw over leading dims, e.g.
    ``(1, M)`` shares the noise between the members of a pair.
    """
    f = field
    remaining = T - f.t
    while remaining > 1e-15:
        h = min(dt, remaining)
        shape = noise_shape if noise_shape is not None else f.values.shape
        xi = grid_noise(shape, h, f.dx, rng) if f.lam != 0 else None
        f = mshe_step(f, h, noise=xi)
        remaining = T - f.t
    return f


def heat_spectral(values, a, T):
    """Exact heat semigroup e^{a T Lap} on grid data (trigonometric interpolant)."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    c = np.fft.rfft(values, axis=-1)
    k = np.arange(c.shape[-1])
    c = c * np.exp(-a * (2 * np.pi * k) ** 2 * T)
    return np.fft.irfft(c, n=M, axis=-1)


def cole_hopf_pairing(field, J):
    """<J, Y> = -sum_i dJ(x_i) log Z_i dx on the periodic grid."""
    Z = field.values if isinstance(field, GridField) else np.asarray(field, dtype=float)
    M = Z.shape[-1]
    if np.any(Z <= 0):
        raise NonpositiveField("Cole-Hopf pairing needs Z > 0 everywhere")
    dJ = J.derivative(np.arange(M) / M)
    return -np.sum(dJ * np.log(Z), axis=-1) / M


def heat_pairing_decay(delta, k, a, T):
    """delta e^{-a (2 pi k)^2 T}: the heat-evolved pairing of a mode-k gap."""
    return delta * math.exp(-a * (2 * np.pi * k) ** 2 * T)


@dataclass
class FellerASHEResult:
    distance0: float
    distanceT: float
    predicted: float


def feller_check_ashe(field1, field2, J_modes, T, seed, n_steps=16):
    """Evolve two fields on one noise stream; return the pairing gaps.

    ``predicted`` is the heat-evolved initial difference paired with J.
    """
    from .zrp import seeded_rng

    rng = seeded_rng(seed)
    dt = T / n_steps
    f1, f2 = field1, field2
    d0 = f1.pair(J_modes) - f2.pair(J_modes)
    for _ in range(n_steps):
        xi = draw_noise(f1.K, rng)
        f1 = ashe_step(f1, dt, noise=xi)
        f2 = ashe_step(f2, dt, noise=xi)
    decay = np.exp(-_decay_rates(field1.K, field1.a) * T)
    diff = (field1.modes - field2.modes)[field1.K:] * decay
    gap = SpectralField.from_positive(diff, field1.a, field1.b, field1.kind)
    return FellerASHEResult(d0, f1.pair(J_modes) - f2.pair(J_modes), gap.pair(J_modes))


@dataclass
class FellerSBEResult:
    epsilon: float
    input_ms: float
    output_ms: float
    output_se: float
    flagged: int
    runs: int


def feller_check_sbe(Z0, J, T, seed, ensemble, epsilon, lam=1.0, a=1.0, dt=None,
                     perturbation=None):
    """Shared-noise pairs Z0 and Z0 (1 + eps phi); mean-square Cole-Hopf gap at T.

    Runs that go nonpositive in either member are excluded and counted.
    """
    from .zrp import seeded_rng

    Z0 = np.asarray(Z0, dtype=float)
    M = Z0.shape[0]
    xs = np.arange(M) / M
    phi = np.cos(2 * np.pi * xs) if perturbation is None else np.asarray(perturbation(xs))
    Z1 = Z0 * (1 + epsilon * phi)
    if np.any(Z1 <= 0) or np.any(Z0 <= 0):
        raise NonpositiveField("initial data must be positive")
    dt = 0.25 / (M * M * a) if dt is None else dt
    rng = seeded_rng(seed)
    vals = np.empty((ensemble, 2, M))
    vals[:, 0] = Z0
    vals[:, 1] = Z1
    f = GridField(vals, lam, a)
    f = mshe_evolve(f, T, dt, rng, noise_shape=(ensemble, 1, M))
    ok = ~f.nonpositive.any(axis=1)
    Zt = f.values[ok]
    gaps = cole_hopf_pairing(Zt[:, 0], J) - cole_hopf_pairing(Zt[:, 1], J)
    sq = gaps ** 2
    input_ms = float(np.mean((Z1 - Z0) ** 2))
    n = sq.shape[0]
    return FellerSBEResult(epsilon, input_ms, float(sq.mean()),
                           float(sq.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
                           int((~ok).sum()), ensemble)


def write_trajectory(path, times, index, values, seed, header=""):
    """CSV with columns t, index (mode or grid point), value."""
    with open(path, "w") as fh:
        fh.write(f"# seed={seed} {header}\n")
        fh.write("t,index,value\n")
        for t, row in zip(times, values):
            for i, v in zip(index, np.atleast_1d(row)):
                fh.write(f"{float(t)!r},{i},{float(v)!r}\n")
