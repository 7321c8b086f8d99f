"""Diffusive molecular communication channels: closed forms and stochastic simulators."""

from . import cir, mobile, physics, rxsignal, stochsim
from .errors import AlignmentError, ConvergenceError, DomainError, GeometryError, UnsupportedModelError

__all__ = [
    "cir",
    "mobile",
    "physics",
    "rxsignal",
    "stochsim",
    "AlignmentError",
    "ConvergenceError",
    "DomainError",
    "GeometryError",
    "UnsupportedModelError",
]
