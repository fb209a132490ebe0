"""B-spline knot construction and basis evaluation.

Knot sequences are tailored so that ``N`` observation times yield exactly
``N`` basis functions of order ``K`` (degree ``K-1``): endpoints repeated
``K`` times, interior knots at observation points for even ``K`` and at
midpoints between observations for odd ``K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InsufficientDataError, InvalidInputError, OutOfRangeError

MAX_ORDER = 6


@dataclass(frozen=True)
class KnotVector:
    """Nondecreasing knot sequence with its spline order."""

    knots: np.ndarray
    order: int

    def __post_init__(self):
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", knots)
        if not 1 <= self.order <= MAX_ORDER:
            raise InvalidInputError(f"order must be in 1..{MAX_ORDER}, got {self.order}")
        if knots.ndim != 1 or knots.shape[0] < 2 * self.order:
            raise InvalidInputError("need at least 2*order knots")
        if np.any(np.diff(knots) < 0):
            raise InvalidInputError("knots must be nondecreasing")
        _, counts = np.unique(knots, return_counts=True)
        if counts.max() > self.order:
            raise InvalidInputError("knot multiplicity cannot exceed the order")

    @property
    def n_splines(self) -> int:
        return self.knots.shape[0] - self.order

    @property
    def t_min(self) -> float:
        return float(self.knots[0])

    @property
    def t_max(self) -> float:
        return float(self.knots[-1])


@dataclass
class BasisMatrix:
    """Windowed evaluation of a basis set at a list of times.

    Row ``i`` holds the (derivative) values of the ``order`` consecutive
    basis functions starting at index ``starts[i]``; all other entries of the
    conceptual ``n_eval x n_splines`` matrix are exactly zero.
    """

    starts: np.ndarray
    window: np.ndarray
    n_splines: int
    eval_times: np.ndarray
    derivative_order: int
    order: int
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def values(self) -> np.ndarray:
        """Dense ``n_eval x n_splines`` matrix (materialized on first use)."""
        if self._dense is None:
            dense = np.zeros((self.starts.shape[0], self.n_splines))
            cols = self.starts[:, None] + np.arange(self.order)[None, :]
            np.put_along_axis(dense, cols, self.window, axis=1)
            self._dense = dense
        return self._dense

    def dot(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate ``sum_m coeffs[m] * X_m`` at every evaluation time."""
        return _kernels.window_dot(self.starts, self.window, coeffs)


def _validate_times(times: np.ndarray, order: int) -> np.ndarray:
    times = np.ascontiguousarray(times, dtype=np.float64)
    if times.ndim != 1:
        raise InvalidInputError("times must be one-dimensional")
    if times.shape[0] < order:
        raise InsufficientDataError(
            f"need at least {order} observation times, got {times.shape[0]}"
        )
    if np.any(np.diff(times) <= 0):
        raise InvalidInputError("times must be strictly increasing")
    return times


def interpolation_knots(times: np.ndarray, order: int) -> KnotVector:
    """Knot sequence whose order-``order`` basis interpolates the given times.

    Produces ``N + order`` knots: the first and last repeated ``order``
    times, interior knots at observation points (even order) or midpoints
    (odd order), for exactly ``N`` basis functions.
    """
    if not 1 <= order <= MAX_ORDER:
        raise InvalidInputError(f"order must be in 1..{MAX_ORDER}, got {order}")
    times = _validate_times(times, order)
    n = times.shape[0]
    knots = np.empty(n + order)
    knots[:order] = times[0]
    knots[n:] = times[-1]
    if order % 2 == 0:
        half = order // 2
        knots[order:n] = times[order - half : n - half]
    else:
        shift = (order + 1) // 2
        lo = np.arange(order, n) - shift
        knots[order:n] = 0.5 * (times[lo] + times[lo + 1])
    return KnotVector(knots, order)


def evaluate_basis(kv: KnotVector, eval_times: np.ndarray, d: int = 0) -> BasisMatrix:
    """Evaluate the d-th derivative of every basis function at ``eval_times``.

    ``d >= order`` returns an all-zero matrix (degree exhausted).  Times
    outside the knot span raise; the final basis function includes the last
    knot point, so the right endpoint is evaluated by left-continuity.
    """
    eval_times = np.ascontiguousarray(eval_times, dtype=np.float64)
    if d < 0:
        raise InvalidInputError("derivative order must be nonnegative")
    if eval_times.size and (
        eval_times.min() < kv.t_min or eval_times.max() > kv.t_max
    ):
        raise OutOfRangeError(
            f"evaluation times must lie within [{kv.t_min}, {kv.t_max}]"
        )
    starts, window = _kernels.basis_windows(kv.knots, kv.order, eval_times, d)
    return BasisMatrix(
        starts=starts,
        window=window,
        n_splines=kv.n_splines,
        eval_times=eval_times,
        derivative_order=d,
        order=kv.order,
    )
