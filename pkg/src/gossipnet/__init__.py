"""Asynchronous gossip optimisation: simulators, algorithms and rate theory."""

from ._accel import JIT_ENABLED
from .errors import ClockRegression, InvalidParameter, InvalidState, NumericFailure

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED",
    "ClockRegression",
    "InvalidParameter",
    "InvalidState",
    "NumericFailure",
    "__version__",
]
