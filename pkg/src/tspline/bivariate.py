"""Bivariate smoothing with shared tension, mean-flow removal, and projection.

A bivariate fit removes a low-order polynomial mean path per direction (the
fit is only justified when the residual process is stationary and isotropic),
then applies one tension parameter to both directions, chosen by minimizing
the summed per-direction objective.  The total smoother combines the mean
and residual operators as ``S_T = S_mean + S_lam - S_lam S_mean``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .distributions import Gaussian, NoiseModel
from .errors import InsufficientDataError, InvalidInputError, ProjectionUnsuitableError
from .smooth import (
    SmoothingFit,
    SmoothingProblem,
    a_priori_sample_size,
    golden_log_search,
    lambda_initial,
    reduced_knots,
)
from .spectral import estimate_rms_derivative
from .track import TrackSeries

__all__ = [
    "PolynomialMean",
    "remove_mean",
    "BivariateFit",
    "bivariate_smooth",
    "total_operator",
    "standard_errors",
    "project",
    "unproject",
    "EARTH_RADIUS",
]

EARTH_RADIUS = 6_371_000.0


# ---------------------------------------------------------------------------
# Mean removal.
# ---------------------------------------------------------------------------


@dataclass
class PolynomialMean:
    """Weighted least-squares polynomial mean path of one coordinate."""

    coeffs: np.ndarray  # in the scaled variable s = (t - t0) / span
    t0: float
    span: float
    operator: np.ndarray  # dense hat matrix at the observation times

    def __call__(self, t):
        s = (np.asarray(t, dtype=np.float64) - self.t0) / self.span
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def design_row(self, t):
        s = (np.asarray(t, dtype=np.float64) - self.t0) / self.span
        return np.polynomial.polynomial.polyvander(s, self.coeffs.shape[0] - 1)


def _fit_polynomial_mean(times, values, degree, noise: NoiseModel | None):
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = times.shape[0]
    degree = int(degree)
    if n <= degree + 1:
        new_degree = max(0, n - 2)
        warnings.warn(
            f"too few points for a degree-{degree} mean; lowering to {new_degree}",
            RuntimeWarning,
        )
        degree = new_degree
    t0 = float(times[0])
    span = float(times[-1] - times[0]) or 1.0
    s = (times - t0) / span
    P = np.polynomial.polynomial.polyvander(s, degree)
    w = np.ones(n)
    if noise is not None and not isinstance(noise, Gaussian):
        # IRLS-weighted mean for heavy-tailed error models
        coeffs = np.linalg.lstsq(P, values, rcond=None)[0]
        for _ in range(100):
            resid = values - P @ coeffs
            w = 1.0 / np.asarray(noise.irls_weight(resid))
            wp = P * w[:, None]
            coeffs_new = np.linalg.solve(P.T @ wp, P.T @ (w * values))
            done = np.max(np.abs(coeffs_new - coeffs)) < 1e-10 * max(
                1.0, np.max(np.abs(coeffs))
            )
            coeffs = coeffs_new
            if done:
                break
    else:
        coeffs = np.linalg.lstsq(P, values, rcond=None)[0]
    wp = P * w[:, None]
    hat = P @ np.linalg.solve(P.T @ wp, wp.T)
    return PolynomialMean(coeffs=coeffs, t0=t0, span=span, operator=hat)


def remove_mean(track: TrackSeries, tension: int, noise: NoiseModel | None = None):
    """Remove a degree-(tension+1) polynomial mean path per direction.

    Returns ``(means, residual_track)`` where ``means`` is a tuple of
    :class:`PolynomialMean` (one per direction; the y entry is None for
    univariate tracks).
    """
    if track.n <= tension + 2:
        raise InsufficientDataError("need more than tension+2 observations")
    degree = tension + 1
    mean_x = _fit_polynomial_mean(track.times, track.x, degree, noise)
    resid_x = track.x - mean_x(track.times)
    mean_y = None
    resid_y = None
    if track.is_bivariate:
        mean_y = _fit_polynomial_mean(track.times, track.y, degree, noise)
        resid_y = track.y - mean_y(track.times)
    residual = TrackSeries(times=track.times.copy(), x=resid_x, y=resid_y)
    return (mean_x, mean_y), residual


# ---------------------------------------------------------------------------
# Operators.
# ---------------------------------------------------------------------------


def _mean_derivative(pm: PolynomialMean, t):
    t = np.asarray(t, dtype=np.float64)
    if pm.coeffs.shape[0] < 2:
        return np.zeros_like(t)
    dc = np.polynomial.polynomial.polyder(pm.coeffs)
    return np.polynomial.polynomial.polyval((t - pm.t0) / pm.span, dc) / pm.span


def total_operator(mean_op: np.ndarray, smooth_op: np.ndarray) -> np.ndarray:
    """Combined smoother for mean-removal followed by residual smoothing."""
    return mean_op + smooth_op - smooth_op @ mean_op


def standard_errors(total_op: np.ndarray, cov_diag) -> np.ndarray:
    """Per-point standard error ``sqrt(diag(S_T Sigma S_T^T))``."""
    cov_diag = np.asarray(cov_diag, dtype=np.float64)
    return np.sqrt(np.einsum("ij,j,ij->i", total_op, cov_diag, total_op))


# ---------------------------------------------------------------------------
# Bivariate fit.
# ---------------------------------------------------------------------------


@dataclass
class BivariateFit:
    track: TrackSeries
    mean_x: PolynomialMean
    mean_y: PolynomialMean
    fit_x: SmoothingFit
    fit_y: SmoothingFit
    lam: float

    @property
    def order(self) -> int:
        return self.fit_x.problem.order

    def fitted(self, t=None):
        """Total fitted path (mean + smoothed residual) at ``t`` (default: obs times)."""
        if t is None:
            return (
                self.mean_x(self.track.times) + self.fit_x.fitted,
                self.mean_y(self.track.times) + self.fit_y.fitted,
            )
        return (
            self.mean_x(t) + self.fit_x.spline(t),
            self.mean_y(t) + self.fit_y.spline(t),
        )

    def velocity(self, t):
        return (
            _mean_derivative(self.mean_x, t) + self.fit_x.spline(t, 1),
            _mean_derivative(self.mean_y, t) + self.fit_y.spline(t, 1),
        )

    def residuals(self):
        """Observation-minus-fit errors per direction."""
        fx, fy = self.fitted()
        return self.track.x - fx, self.track.y - fy

    def total_operators(self):
        sx = total_operator(self.mean_x.operator, self.fit_x.smoother())
        sy = total_operator(self.mean_y.operator, self.fit_y.smoother())
        return sx, sy

    def expected_mse_sum(self) -> float:
        return self.fit_x.expected_mse() + self.fit_y.expected_mse()

    def standard_errors(self):
        s2 = self.fit_x.sigma2()
        sx, sy = self.total_operators()
        n = self.track.n
        return (
            standard_errors(sx, np.full(n, s2)),
            standard_errors(sy, np.full(n, s2)),
        )

    def true_mse(self):
        """Per-direction true MSE against the track's truth reference."""
        tx, ty = self.track.truth_at_observations()
        fx, fy = self.fitted()
        return float(np.mean((fx - tx) ** 2)), float(np.mean((fy - ty) ** 2))


def _blind_lambda(track: TrackSeries, noise: NoiseModel, tension: int):
    """A-priori tension and sample size from the observed series."""
    sigma = np.sqrt(noise.variance())
    dt = float(np.median(np.diff(track.times)))
    u_vals, x_vals = [], []
    for series in (track.x, track.y) if track.is_bivariate else (track.x,):
        u_est = estimate_rms_derivative(track.times, series, sigma, 1)
        xt_est = estimate_rms_derivative(track.times, series, sigma, tension)
        if u_est.signal_detected:
            u_vals.append(u_est.value)
        if xt_est.signal_detected:
            x_vals.append(xt_est.value)
    if not u_vals or not x_vals:
        return None, 1.0
    u_rms = float(np.mean(u_vals))
    x_rms = float(np.mean(x_vals))
    n_eff = a_priori_sample_size(sigma, u_rms, dt)
    return lambda_initial(x_rms, u_rms, sigma, dt), n_eff


def bivariate_smooth(
    track: TrackSeries,
    noise: NoiseModel,
    degree: int = 3,
    objective: str = "expected_mse",
    lam0: float | None = None,
    reduce_dofs: bool = True,
) -> BivariateFit:
    """Shared-tension bivariate smoothing spline of the given degree.

    Tension is applied at the spline degree; the mean flow is removed first
    and one tension parameter minimizes the summed per-direction objective
    (``"expected_mse"`` or ``"true_mse"`` when the track carries truth).
    """
    if not track.is_bivariate:
        raise InvalidInputError("bivariate_smooth needs x and y")
    tension = degree
    order = degree + 1
    (mean_x, mean_y), residual = remove_mean(track, tension, noise)
    blind_lam, n_eff0 = _blind_lambda(track, noise, tension)
    if lam0 is None:
        lam0 = blind_lam
    knots = None
    if reduce_dofs and n_eff0 > 1.5:
        knots = reduced_knots(track.times, n_eff0, order)
    prob_x = SmoothingProblem(residual.times, residual.x, noise, order, tension, knots)
    prob_y = SmoothingProblem(residual.times, residual.y, noise, order, tension, knots)

    if track.has_truth() and objective == "true_mse":
        tx, ty = track.truth_at_observations()
        rx = tx - mean_x(track.times)
        ry = ty - mean_y(track.times)

        def score(fx: SmoothingFit, fy: SmoothingFit) -> float:
            return fx.true_mse(rx) + fy.true_mse(ry)

    else:

        def score(fx: SmoothingFit, fy: SmoothingFit) -> float:
            return fx.expected_mse() + fy.expected_mse()

    state = {"wx": None, "wy": None}

    def f(lam: float) -> float:
        fx = prob_x.fit(lam, w_var0=state["wx"])
        fy = prob_y.fit(lam, w_var0=state["wy"])
        state["wx"], state["wy"] = fx.weights, fy.weights
        return score(fx, fy)

    if lam0 is None or lam0 <= 0:
        from .smooth import _lambda_floor

        lam0 = _lambda_floor(prob_x)
    lam, _, bracketed, _ = golden_log_search(f, lam0)
    if not bracketed:
        warnings.warn("shared-tension objective not bracketable", RuntimeWarning)
    fx = prob_x.fit(lam)
    fy = prob_y.fit(lam)
    return BivariateFit(track=track, mean_x=mean_x, mean_y=mean_y, fit_x=fx, fit_y=fy, lam=lam)


# ---------------------------------------------------------------------------
# Spherical transverse Mercator projection.
# ---------------------------------------------------------------------------


def project(lat, lon, central_meridian: float):
    """Spherical transverse Mercator (meters) about the given central meridian."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat) >= 89.0):
        raise ProjectionUnsuitableError("latitudes beyond +/-89 degrees")
    dlon = np.radians(lon - central_meridian)
    if np.any(np.abs(lon - central_meridian) > 90.0):
        raise ProjectionUnsuitableError("longitude span exceeds 90 degrees")
    phi = np.radians(lat)
    b = np.cos(phi) * np.sin(dlon)
    x = EARTH_RADIUS * np.arctanh(b)
    y = EARTH_RADIUS * np.arctan2(np.tan(phi), np.cos(dlon))
    return x, y


def unproject(x, y, central_meridian: float):
    """Inverse of :func:`project`."""
    x = np.asarray(x, dtype=np.float64) / EARTH_RADIUS
    y = np.asarray(y, dtype=np.float64) / EARTH_RADIUS
    lat = np.degrees(np.arcsin(np.sin(y) / np.cosh(x)))
    lon = central_meridian + np.degrees(np.arctan2(np.sinh(x), np.cos(y)))
    return lat, lon
