"""Smoothing splines with tension for noisy, irregularly sampled trajectories."""

from .basis import BasisMatrix, KnotVector, evaluate_basis, interpolation_knots
from .interpolate import Spline, interpolating_spline

__version__ = "0.1.0"

__all__ = [
    "BasisMatrix",
    "KnotVector",
    "evaluate_basis",
    "interpolation_knots",
    "Spline",
    "interpolating_spline",
]
