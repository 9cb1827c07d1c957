"""Kalman filtering over lossy, correlated packet channels.

Operator algebra for the prediction-covariance Riccati maps, explicit
covariance bounds, packet-arrival channel models, sample-path simulation of
the intermittent Kalman filter and series tests that classify almost-sure
stability of ``Tr(P_k)``.
"""

from .errors import (
    DimensionError,
    DomainError,
    FadingKFError,
    NonConvergenceError,
    NumericError,
    PairingError,
    UnobservableError,
)
from .system_model import LtiSystem, SystemProfile, profile_system, validate_system

__all__ = [
    "DimensionError",
    "DomainError",
    "FadingKFError",
    "LtiSystem",
    "NonConvergenceError",
    "NumericError",
    "PairingError",
    "SystemProfile",
    "UnobservableError",
    "profile_system",
    "validate_system",
]

__version__ = "0.1.0"
