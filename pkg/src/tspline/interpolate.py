"""Interpolating splines through exact observations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .basis import BasisMatrix, KnotVector, evaluate_basis, interpolation_knots
from .errors import NumericalFailureError

__all__ = ["Spline", "interpolating_spline", "collocation_solve"]


@dataclass(frozen=True)
class Spline:
    """A spline ``x(t) = sum_m coefficients[m] * X_m(t)``."""

    kv: KnotVector
    coefficients: np.ndarray

    @property
    def order(self) -> int:
        return self.kv.order

    def __call__(self, t, d: int = 0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        basis = evaluate_basis(self.kv, t, d)
        return basis.dot(self.coefficients)


def _banded_from_windows(basis: BasisMatrix, n: int):
    """Collocation matrix in LAPACK banded form; bandwidth order-1 each side."""
    bw = basis.order - 1
    ab = np.zeros((2 * bw + 1, n))
    for a in range(basis.order):
        cols = basis.starts + a
        rows = bw + np.arange(n) - cols
        if np.any(rows < 0) or np.any(rows > 2 * bw):
            raise NumericalFailureError("collocation matrix exceeds expected bandwidth")
        ab[rows, cols] = basis.window[:, a]
    return ab, bw


def collocation_solve(basis: BasisMatrix, rhs: np.ndarray) -> np.ndarray:
    """Solve the square collocation system ``X c = rhs`` with a banded factorization."""
    n = rhs.shape[0]
    if basis.n_splines != n:
        raise NumericalFailureError("collocation system must be square")
    ab, bw = _banded_from_windows(basis, n)
    try:
        return solve_banded((bw, bw), ab, rhs)
    except LinAlgError as exc:  # pragma: no cover - canonical knots are nonsingular
        raise NumericalFailureError("singular collocation matrix") from exc


def interpolating_spline(times, values, order: int) -> Spline:
    """Order-``order`` spline through all ``(times, values)`` pairs.

    Uses the canonical knot placement from :func:`interpolation_knots`, so the
    collocation system is square, banded and nonsingular.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    kv = interpolation_knots(times, order)
    basis = evaluate_basis(kv, np.asarray(times, dtype=np.float64))
    coeffs = collocation_solve(basis, values)
    return Spline(kv, coeffs)
