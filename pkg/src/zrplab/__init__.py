"""Simulation and verification lab for the weakly asymmetric zero-range process."""

from .coupling import CoupledState, check_height_sandwich, coupled_run, coupled_step, field_distance
from .envelope import EnvelopeSpec, TubeSampler, envelope_sample, relative_entropy_estimate
from .heights import HeightField, TestFunction, field_by_sbp, fluctuation_field, height_from_config
from .measures import ProductMeasure, build_measure, solve_fugacity, transport_constants
from .rates import RateFunction, validate_rate_function
from .zrp import Configuration, ModelParams, run_until, seeded_rng, step

__version__ = "0.1.0"

__all__ = [
    "CoupledState", "check_height_sandwich", "coupled_run", "coupled_step", "field_distance",
    "EnvelopeSpec", "TubeSampler", "envelope_sample", "relative_entropy_estimate",
    "HeightField", "TestFunction", "field_by_sbp", "fluctuation_field", "height_from_config",
    "ProductMeasure", "build_measure", "solve_fugacity", "transport_constants",
    "RateFunction", "validate_rate_function",
    "Configuration", "ModelParams", "run_until", "seeded_rng", "step",
]
