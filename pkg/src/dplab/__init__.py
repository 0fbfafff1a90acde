"""Differential privacy under continual observation: threshold monitors, the
hard-instance attack against them, and private online prediction."""

from .core import (
    FiniteDistribution,
    ParameterError,
    PrivacyParams,
    RandomSource,
    StateError,
    UpdateStream,
    check_indistinguishable,
    hockey_stick_divergence,
    linf_error,
    neighbors,
)

__version__ = "0.1.0"
