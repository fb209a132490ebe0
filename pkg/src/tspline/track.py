"""Time-ordered observation series, optionally with a known true path."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

__all__ = ["TrackSeries"]


@dataclass
class TrackSeries:
    """Univariate (x only) or bivariate (x, y) observations against time.

    Synthetic tracks carry the uncontaminated truth at full resolution so
    fits can be scored after subsampling; ``outlier_mask`` marks which
    observations were drawn from the contaminating distribution.
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray | None = None
    truth_times: np.ndarray | None = None
    truth_x: np.ndarray | None = None
    truth_y: np.ndarray | None = None
    outlier_mask: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.float64)
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        if self.times.ndim != 1:
            raise InvalidInputError("times must be one-dimensional")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("times must be strictly increasing (no duplicates)")
        if self.x.shape != self.times.shape:
            raise InvalidInputError("x must match times in length")
        if self.y is not None:
            self.y = np.ascontiguousarray(self.y, dtype=np.float64)
            if self.y.shape != self.times.shape:
                raise InvalidInputError("y must match times in length")

    @property
    def is_bivariate(self) -> bool:
        return self.y is not None

    @property
    def n(self) -> int:
        return self.times.shape[0]

    def has_truth(self) -> bool:
        return self.truth_times is not None

    def truth_at_observations(self):
        """True path looked up at the (possibly subsampled) observation times."""
        if not self.has_truth():
            raise InvalidInputError("track carries no truth reference")
        idx = np.searchsorted(self.truth_times, self.times)
        idx = np.clip(idx, 0, self.truth_times.shape[0] - 1)
        if not np.allclose(self.truth_times[idx], self.times, rtol=0, atol=1e-9):
            raise InvalidInputError("observation times are not a subset of truth times")
        tx = self.truth_x[idx]
        return (tx, self.truth_y[idx]) if self.truth_y is not None else (tx, None)

    def stride(self, k: int) -> "TrackSeries":
        """Keep every k-th observation; the truth reference stays untouched."""
        if k < 1 or int(k) != k:
            raise InvalidInputError("stride must be a positive integer")
        k = int(k)
        idx = np.arange(0, self.n, k)
        if idx.shape[0] < 3:
            raise InsufficientDataError("stride leaves too few observations")
        return replace(
            self,
            times=self.times[idx],
            x=self.x[idx],
            y=self.y[idx] if self.y is not None else None,
            outlier_mask=self.outlier_mask[idx] if self.outlier_mask is not None else None,
        )
