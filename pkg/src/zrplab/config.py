"""Experiment configuration: INI files with sections, hashed for provenance."""
from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .envelope import Profile
from .errors import ConfigError
from .rates import RateFunction
from .zrp import ModelParams

EXPERIMENTS = ("invariance", "crossover", "entropy-scan", "sandwich", "sample-invariant",
               "spde-bench")


def _floats(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def _ints(text):
    return [int(t) for t in str(text).replace(",", " ").split()]


@dataclass
class ExperimentConfig:
    experiment: str = "invariance"
    # model
    N: int = 64
    gamma: float = 0.0
    beta: float = 0.5
    rate: str = "constant"
    # measure
    rho: float = 1.0
    alpha: float | None = None
    # envelope
    epsilon: float = 0.5
    target: str = "zero"
    Ns: list = field(default_factory=lambda: [32, 64, 128])
    epsilons: list = field(default_factory=lambda: [0.5])
    samples: int = 200000
    # ensemble
    runs: int = 100
    T: float = 0.1
    kappa: float = 1.0
    gammas: list = field(default_factory=lambda: [0.0, 1.0])
    seed: int = 0
    workers: int = 1
    # crossover
    dt: float = 0.01
    steps: int = 150
    skew_N: int = 128
    skew_gamma: float = 4.0
    skew_T: float = 0.1
    skew_runs: int = 1500
    # spde
    grid: int = 128
    spde_T: float = 0.02
    ensemble: int = 400
    lam: float = 1.0
    # output
    out: str = "out"

    _SECTIONS = {
        "experiment": ("experiment",),
        "model": ("N", "gamma", "beta", "rate"),
        "measure": ("rho", "alpha"),
        "envelope": ("epsilon", "target", "Ns", "epsilons", "samples"),
        "ensemble": ("runs", "T", "kappa", "gammas", "seed", "workers"),
        "crossover": ("dt", "steps", "skew_N", "skew_gamma", "skew_T", "skew_runs"),
        "spde": ("grid", "spde_T", "ensemble", "lam"),
        "output": ("out",),
    }

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.N < 2:
            raise ConfigError("N must be at least 2")
        if self.beta < 0.5:
            raise ConfigError("beta must be >= 1/2")
        if self.runs < 1 or self.workers < 1:
            raise ConfigError("runs and workers must be positive")
        if not self.T >= 0:
            raise ConfigError("T must be non-negative")
        try:
            RateFunction.parse(self.rate)
        except Exception as exc:
            raise ConfigError(f"bad rate {self.rate!r}: {exc}") from exc
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # --- construction
    @classmethod
    def from_parser(cls, cp):
        kw = {}
        types = {f.name: f for f in fields(cls)}
        for section, keys in cls._SECTIONS.items():
            if not cp.has_section(section):
                continue
            for key in cp[section]:
                name = next((k for k in keys if k.lower() == key.lower()), None)
                if name is None:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                kw[name] = _convert(name, cp[section][key], types[name])
        unknown = set(cp.sections()) - set(cls._SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections {sorted(unknown)}")
        try:
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_parser(cp)

    @classmethod
    def from_string(cls, text):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_parser(cp)

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        d = asdict(self)
        for section, keys in self._SECTIONS.items():
            cp[section] = {}
            for k in keys:
                v = d[k]
                if v is None:
                    continue
                cp[section][k] = " ".join(repr(x) for x in v) if isinstance(v, list) else str(v)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self):
        """sha256 of the canonical INI text, excluding worker count and output path."""
        d = ExperimentConfig(**{**asdict(self), "workers": 1, "out": ""})
        return hashlib.sha256(d.to_ini().encode()).hexdigest()[:16]

    # --- derived objects
    def rate_function(self):
        return RateFunction.parse(self.rate)

    def params(self, **over):
        kw = dict(N=self.N, gamma=self.gamma, beta=self.beta, rho=self.rho,
                  rate=self.rate_function())
        kw.update(over)
        return ModelParams(**kw)

    def target_profile(self):
        t = self.target.strip()
        if t == "zero":
            return lambda x: np.zeros_like(np.asarray(x, dtype=float))
        if t.startswith("sin:"):
            amp = float(t[4:])
            return lambda x: amp * np.sin(2 * math.pi * np.asarray(x, dtype=float))
        try:
            return Profile.from_csv(t)
        except OSError as exc:
            raise ConfigError(f"cannot read target profile {t}: {exc}") from exc


def _convert(name, text, f):
    try:
        if name in ("Ns",):
            return _ints(text)
        if name in ("epsilons", "gammas"):
            return _floats(text)
        if name == "alpha":
            return None if text.strip().lower() in ("", "none") else float(text)
        default = f.default
        if isinstance(default, bool):
            return text.strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
