"""Bifurcation of nontrivial solutions from a spectral gap edge of a periodic Schroedinger operator."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .reporting import Report
from .spectral import DiscreteOperator, PeriodicPotential, SpectralGap, bloch_bands, build_split, find_gaps

__version__ = "0.1.0"

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "Report", "DiscreteOperator",
           "PeriodicPotential", "SpectralGap", "bloch_bands", "build_split", "find_gaps"]
