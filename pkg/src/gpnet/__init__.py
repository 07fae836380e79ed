"""Generalized Poisson models for dynamic count-weighted networks."""

from .errors import (
    ConfigError,
    DegenerateSequenceError,
    DomainError,
    GPNetError,
    InsufficientDrawsError,
    InvalidParameterError,
    MaskedEntryError,
    NoMissingEntriesError,
    ParseError,
    RangeError,
)
from .gp import GPParams, GPReparam, cumulant, log_pmf, mean_var, pmf_table, sample, sample_array, zeta_j0
from .network import ModelSpec, ParamState, TemporalNetwork, log_likelihood, theta_of_zeta
from .sampler import ChainOutput, SamplerConfig, run_chain
from .simgen import SimDesign, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateSequenceError", "DomainError", "GPNetError", "InsufficientDrawsError",
    "InvalidParameterError", "MaskedEntryError", "NoMissingEntriesError", "ParseError", "RangeError",
    "GPParams", "GPReparam", "cumulant", "log_pmf", "mean_var", "pmf_table", "sample", "sample_array", "zeta_j0",
    "ModelSpec", "ParamState", "TemporalNetwork", "log_likelihood", "theta_of_zeta",
    "ChainOutput", "SamplerConfig", "run_chain", "SimDesign", "generate",
]
