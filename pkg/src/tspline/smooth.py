"""Core smoothing spline machinery.

The fit minimizes

    (1/N) sum_i ((x_i - x(t_i))/sigma_i)^2
        + (lam/(t_N - t_1)) * integral (d^T x/dt^T - mu)^2 dt

over spline coefficients, where ``lam`` is the user-facing tension
parameter.  Internally the normal equations use the multiplier
``lam_sys = N * lam / (t_N - t_1)`` against the derivative Gram matrix, and
per-observation effective variances ``w_i`` replace ``sigma_i^2`` during
IRLS for non-Gaussian error models.

Everything is banded: the design matrix is stored in window form, the Gram
and normal matrices in lower banded form, and solves go through a banded
Cholesky factorization.  The full N x N smoothing matrix is only
materialized on demand.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from . import _kernels
from .basis import BasisMatrix, KnotVector, evaluate_basis, interpolation_knots
from .distributions import Gaussian, NoiseModel
from .errors import (
    DegenerateSignalError,
    InsufficientDataError,
    InvalidInputError,
    NumericalFailureError,
)
from .interpolate import Spline, collocation_solve

__all__ = [
    "SmoothingProblem",
    "SmoothingFit",
    "EffectiveSampleSize",
    "tension_matrix",
    "solve_coefficients",
    "smoothing_matrix",
    "expected_mse",
    "effective_sample_size",
    "a_priori_sample_size",
    "lambda_initial",
    "reduced_knots",
    "minimize_lambda",
    "LambdaSearch",
    "effective_nyquist",
]

_IRLS_TOL = 1e-9
_IRLS_MAX_ITER = 200
GOLDEN_TOL_LOG10 = 1e-3


# ---------------------------------------------------------------------------
# Banded helpers.
# ---------------------------------------------------------------------------


def _band_to_dense(band: np.ndarray, m: int) -> np.ndarray:
    k = band.shape[0]
    out = np.zeros((m, m))
    out[np.arange(m), np.arange(m)] = band[0]
    for r in range(1, k):
        idx = np.arange(m - r)
        out[idx + r, idx] = band[r, : m - r]
        out[idx, idx + r] = band[r, : m - r]
    return out


def _tension_band(kv: KnotVector, T: int):
    """Banded Gram matrix of T-th derivative basis functions and its row integrals.

    Per-interval Gauss-Legendre with enough nodes to be exact for the
    piecewise-polynomial integrand.
    """
    K = kv.order
    knots = kv.knots
    lo, hi = K - 1, knots.shape[0] - K - 1
    left = knots[lo : hi + 1]
    right = knots[lo + 1 : hi + 2]
    keep = right > left
    left, right = left[keep], right[keep]
    n_nodes = max(1, K - T)
    gx, gw = np.polynomial.legendre.leggauss(n_nodes)
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    starts, win = _kernels.basis_windows(knots, K, pts, T)
    band = _kernels.gram_band(starts, win, wts, kv.n_splines)
    integrals = _kernels.scatter_vector(starts, win, wts, kv.n_splines)
    return band, integrals


def tension_matrix(kv: KnotVector, T: int) -> np.ndarray:
    """Dense Gram matrix ``int X_i^(T) X_j^(T) dt`` over the knot span."""
    if not 0 <= T <= kv.order - 1:
        raise InvalidInputError("tension order must satisfy 0 <= T <= order-1")
    band, _ = _tension_band(kv, T)
    return _band_to_dense(band, kv.n_splines)


def _dense_to_band(a: np.ndarray, k: int) -> np.ndarray:
    m = a.shape[0]
    band = np.zeros((k, m))
    band[0] = np.diag(a)
    for r in range(1, k):
        band[r, : m - r] = np.diag(a, -r)
    return band


def _cholesky(band: np.ndarray):
    try:
        return cholesky_banded(band, lower=True)
    except LinAlgError as exc:
        raise NumericalFailureError("banded normal matrix is not positive definite") from exc


# ---------------------------------------------------------------------------
# Public operator-level operations (dense surface, small problems).
# ---------------------------------------------------------------------------


def solve_coefficients(basis: BasisMatrix, gram, weights, values, lam_sys, mu=0.0,
                       integrals=None):
    """Penalized normal-equation solve for the spline coefficients.

    ``gram`` may be dense ``(M, M)`` or lower-banded ``(order, M)``;
    ``weights`` is the diagonal of W (inverse effective variances);
    ``lam_sys`` multiplies the Gram matrix directly.  A nonzero mean tension
    ``mu`` needs the row integrals of the tensioned derivative basis
    (``integrals``), which :func:`_tension_band` produces alongside the Gram.
    """
    if lam_sys < 0:
        raise InvalidInputError("tension multiplier must be nonnegative")
    m = basis.n_splines
    gram = np.asarray(gram, dtype=np.float64)
    gband = gram if gram.shape[0] == basis.order else _dense_to_band(gram, basis.order)
    weights = np.asarray(weights, dtype=np.float64)
    a_band = _kernels.gram_band(basis.starts, basis.window, weights, m)
    rhs = _kernels.scatter_vector(basis.starts, basis.window, weights * values, m)
    if mu != 0.0:
        if integrals is None:
            raise InvalidInputError("nonzero mu requires the derivative row integrals")
        rhs = rhs + lam_sys * mu * np.asarray(integrals, dtype=np.float64)
    chol = _cholesky(a_band + lam_sys * gband)
    return cho_solve_banded((chol, True), rhs)


def smoothing_matrix(basis: BasisMatrix, gram, weights, lam_sys) -> np.ndarray:
    """Dense smoother ``X (X^T W X + lam V^T V)^{-1} X^T W``."""
    m = basis.n_splines
    gram = np.asarray(gram, dtype=np.float64)
    gband = gram if gram.shape[0] == basis.order else _dense_to_band(gram, basis.order)
    weights = np.asarray(weights, dtype=np.float64)
    a_band = _kernels.gram_band(basis.starts, basis.window, weights, m)
    chol = _cholesky(a_band + lam_sys * gband)
    n = basis.starts.shape[0]
    xtw = np.zeros((m, n))
    cols = basis.starts[:, None] + np.arange(basis.order)[None, :]
    np.add.at(xtw, (cols.ravel(), np.repeat(np.arange(n), basis.order)),
              (basis.window * weights[:, None]).ravel())
    y = cho_solve_banded((chol, True), xtw)
    return _kernels.window_matmul(basis.starts, basis.window, y)


def expected_mse(smoother: np.ndarray, values: np.ndarray, sigma2: float) -> float:
    """Expected mean square error of a linear smoother at known noise variance."""
    n = values.shape[0]
    resid = smoother @ values - values
    return float(resid @ resid / n + 2 * sigma2 * np.trace(smoother) / n - sigma2)


@dataclass(frozen=True)
class EffectiveSampleSize:
    n_eff_var: float
    n_eff_se: float


def effective_sample_size(smoother, values, cov_diag, sigma2) -> EffectiveSampleSize:
    """Both effective-sample-size estimators from a dense smoother."""
    n = values.shape[0]
    resid = values - smoother @ values
    r = float(resid @ resid) / n
    if r >= sigma2:
        n_var = np.inf
    else:
        n_var = max(1.0, 1.0 / (1.0 - r / sigma2))
    tr = float(np.sum(np.diag(smoother) * np.asarray(cov_diag)))
    n_se = sigma2 * n / tr
    return EffectiveSampleSize(n_eff_var=n_var, n_eff_se=n_se)


# ---------------------------------------------------------------------------
# Assembled problem + fit.
# ---------------------------------------------------------------------------


class SmoothingProblem:
    """Observations, basis, tension Gram matrix and error model, ready to solve.

    ``order`` is the spline order K (degree + 1); tension defaults to the
    spline degree.  ``knots`` overrides the canonical full knot set (used for
    reduced-coefficient fits).
    """

    def __init__(
        self,
        times,
        values,
        noise: NoiseModel,
        order: int = 4,
        tension: int | None = None,
        knots: KnotVector | None = None,
        mu: float = 0.0,
    ):
        times = np.ascontiguousarray(times, dtype=np.float64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        if times.shape != values.shape:
            raise InvalidInputError("times and values must have equal length")
        T = order - 1 if tension is None else tension
        if not 1 <= T <= order - 1:
            raise InvalidInputError("tension order must satisfy 1 <= T <= order-1")
        if times.shape[0] < order + 2:
            raise InsufficientDataError(
                f"need at least order+2 = {order + 2} observations"
            )
        self.times = times
        self.values = values
        self.noise = noise
        self.order = order
        self.tension = T
        self.mu = mu
        self.kv = knots if knots is not None else interpolation_knots(times, order)
        self.basis = evaluate_basis(self.kv, times)
        self.gram_band, self.gram_integrals = _tension_band(self.kv, T)
        self.t_span = float(times[-1] - times[0])
        self.n = times.shape[0]
        self.dt_median = float(np.median(np.diff(times)))
        self._is_gaussian = isinstance(noise, Gaussian)

    def system_multiplier(self, lam: float) -> float:
        return self.n * lam / self.t_span

    def _solve_weighted(self, lam: float, w_var: np.ndarray):
        """One weighted solve; ``w_var`` holds per-observation variances."""
        if lam < 0:
            raise InvalidInputError("tension parameter must be nonnegative")
        weights = 1.0 / w_var
        m = self.kv.n_splines
        lam_sys = self.system_multiplier(lam)
        if lam == 0.0 and m == self.n:
            coeffs = collocation_solve(self.basis, self.values)
            a_band = _kernels.gram_band(self.basis.starts, self.basis.window, weights, m)
            return coeffs, _cholesky(a_band), a_band
        a_band = _kernels.gram_band(self.basis.starts, self.basis.window, weights, m)
        rhs = _kernels.scatter_vector(
            self.basis.starts, self.basis.window, weights * self.values, m
        )
        if self.mu != 0.0:
            rhs = rhs + lam_sys * self.mu * self.gram_integrals
        chol = _cholesky(a_band + lam_sys * self.gram_band)
        coeffs = cho_solve_banded((chol, True), rhs)
        return coeffs, chol, a_band

    def fit(self, lam: float, w_var0: np.ndarray | None = None) -> "SmoothingFit":
        """Solve at tension ``lam``; runs IRLS to convergence for non-Gaussian noise."""
        if self._is_gaussian:
            w_var = np.full(self.n, self.noise.variance())
            coeffs, chol, a_band = self._solve_weighted(lam, w_var)
            return SmoothingFit(self, lam, coeffs, w_var, chol, a_band, True, 1)
        if w_var0 is None:
            start = self.noise.variance()
            if not np.isfinite(start):
                start = self.noise.scale() ** 2
            w_var = np.full(self.n, start)
        else:
            w_var = w_var0.copy()
        converged = False
        iters = 0
        coeffs = chol = a_band = None
        for iters in range(1, _IRLS_MAX_ITER + 1):
            coeffs, chol, a_band = self._solve_weighted(lam, w_var)
            resid = self.values - self.basis.dot(coeffs)
            w_new = np.asarray(self.noise.irls_weight(resid), dtype=np.float64)
            finite = np.isfinite(w_new)
            if not np.all(finite):
                # excluded observations (e.g. beyond a biweight cutoff) keep a
                # huge variance rather than an actual inf
                w_new = np.where(finite, w_new, 1e300)
            delta = np.max(np.abs(w_new - w_var) / np.maximum(w_new, 1e-300))
            w_var = w_new
            if delta < _IRLS_TOL:
                converged = True
                break
        if not converged:
            warnings.warn("IRLS did not converge; returning last iterate", RuntimeWarning)
        coeffs, chol, a_band = self._solve_weighted(lam, w_var)
        return SmoothingFit(self, lam, coeffs, w_var, chol, a_band, converged, iters)


class SmoothingFit:
    """A solved smoothing spline with its diagnostics."""

    def __init__(self, problem, lam, coeffs, w_var, chol, a_band, irls_converged, irls_iters):
        self.problem = problem
        self.lam = lam
        self.coefficients = coeffs
        self.weights = w_var  # per-observation effective variances
        self._chol = chol
        self._a_band = a_band
        self.irls_converged = irls_converged
        self.irls_iterations = irls_iters
        self.fitted = problem.basis.dot(coeffs)
        self.residuals = problem.values - self.fitted
        self._trace = None
        self._smoother = None

    @property
    def spline(self) -> Spline:
        return Spline(self.problem.kv, self.coefficients)

    @property
    def noise(self) -> NoiseModel:
        return self.problem.noise

    def __call__(self, t, d: int = 0):
        return self.spline(t, d)

    def trace_smoother(self) -> float:
        """Trace of the smoothing matrix, via a banded solve (no N x N matrix)."""
        if self._trace is None:
            m = self._a_band.shape[1]
            a_dense = _band_to_dense(self._a_band, m)
            z = cho_solve_banded((self._chol, True), a_dense)
            self._trace = float(np.trace(z))
        return self._trace

    def smoother(self) -> np.ndarray:
        """Dense N x N smoothing matrix (desk-scale sizes only)."""
        if self._smoother is None:
            p = self.problem
            m = p.kv.n_splines
            weights = 1.0 / self.weights
            xtw = np.zeros((m, p.n))
            cols = p.basis.starts[:, None] + np.arange(p.order)[None, :]
            np.add.at(
                xtw,
                (cols.ravel(), np.repeat(np.arange(p.n), p.order)),
                (p.basis.window * weights[:, None]).ravel(),
            )
            y = cho_solve_banded((self._chol, True), xtw)
            self._smoother = _kernels.window_matmul(p.basis.starts, p.basis.window, y)
        return self._smoother

    def sigma2(self) -> float:
        return self.problem.noise.variance()

    def expected_mse(self) -> float:
        n = self.problem.n
        s2 = self.sigma2()
        rss = float(self.residuals @ self.residuals)
        return rss / n + 2 * s2 * self.trace_smoother() / n - s2

    def effective_sample_size(self) -> EffectiveSampleSize:
        n = self.problem.n
        s2 = self.sigma2()
        r = float(self.residuals @ self.residuals) / n
        n_var = np.inf if r >= s2 else max(1.0, 1.0 / (1.0 - r / s2))
        n_se = n / self.trace_smoother()
        return EffectiveSampleSize(n_eff_var=n_var, n_eff_se=n_se)

    def true_mse(self, truth_at_obs) -> float:
        d = self.fitted - np.asarray(truth_at_obs, dtype=np.float64)
        return float(d @ d / d.shape[0])

    def tension_energy(self) -> float:
        """Integrated squared T-th derivative of the fitted spline."""
        m = self.problem.kv.n_splines
        g = _band_to_dense(self.problem.gram_band, m)
        return float(self.coefficients @ g @ self.coefficients)


# ---------------------------------------------------------------------------
# A-priori tension and reduced knots.
# ---------------------------------------------------------------------------


def a_priori_sample_size(
    sigma: float, u_rms: float, dt: float, coeff: float = 14.0, exponent: float = 0.71
) -> float:
    """Effective sample size predicted from the noise-to-motion ratio.

    The ratio ``sigma / (u_rms * dt)`` compares the noise scale to the typical
    displacement between observations; the empirical power law (with
    overridable constants) converts it to a sample size, floored at 1.
    """
    if sigma <= 0 or dt <= 0:
        raise InvalidInputError("sigma and dt must be positive")
    if u_rms <= 0:
        raise DegenerateSignalError("zero rms velocity; treat as pure noise instead")
    ratio = sigma / (u_rms * dt)
    return max(1.0, coeff * ratio**exponent)


def lambda_initial(
    x_rms_T: float,
    u_rms: float,
    sigma: float,
    dt: float,
    coeff: float = 14.0,
    exponent: float = 0.71,
) -> float:
    """A-priori tension parameter from signal statistics.

    ``x_rms_T`` is the rms of the tensioned derivative; the result is 0 when
    the predicted effective sample size is exactly 1 (no shared information
    between neighbors).
    """
    if x_rms_T <= 0:
        raise DegenerateSignalError("zero rms tension derivative")
    n_eff = a_priori_sample_size(sigma, u_rms, dt, coeff, exponent)
    return (1.0 - 1.0 / n_eff) / x_rms_T**2


def reduced_knots(times, n_eff: float, order: int) -> KnotVector:
    """Knot set skipping observations when the effective sample size allows.

    Places knots on every k-th observation with ``k = max(1, floor(2 n_eff / 3))``,
    always retaining the endpoints.
    """
    times = np.ascontiguousarray(times, dtype=np.float64)
    if n_eff < 1:
        raise InvalidInputError("effective sample size must be >= 1")
    k = max(1, int(np.floor(2.0 * n_eff / 3.0)))
    n = times.shape[0]
    k = min(k, max(1, n // max(order, 2)))
    idx = np.arange(0, n, k)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return interpolation_knots(times[idx], order)


def effective_nyquist(n_eff_se: float, dt: float) -> float:
    """Highest credibly resolved frequency, ``1 / (2 n_eff dt)`` in Hz."""
    if n_eff_se <= 0 or dt <= 0:
        raise InvalidInputError("n_eff and dt must be positive")
    return 1.0 / (2.0 * n_eff_se * dt)


# ---------------------------------------------------------------------------
# Scalar minimization over the tension parameter (log space).
# ---------------------------------------------------------------------------


@dataclass
class LambdaSearch:
    lam: float
    value: float
    fit: object
    bracketed: bool
    n_evaluations: int


_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_log_search(
    f,
    lam0: float,
    tol_log10: float = GOLDEN_TOL_LOG10,
    factor: float = 10.0,
    max_expand: int = 14,
):
    """Minimize ``f(lam)`` over lam > 0 by golden section in log10(lam).

    Brackets geometrically outward from ``lam0``; a monotone objective
    returns the best boundary with ``bracketed=False``.
    """
    cache: dict[float, float] = {}

    def eval_log(u: float) -> float:
        if u not in cache:
            cache[u] = f(10.0**u)
        return cache[u]

    u0 = np.log10(lam0)
    step = np.log10(factor)
    lo, mid, hi = u0 - step, u0, u0 + step
    f_lo, f_mid, f_hi = eval_log(lo), eval_log(mid), eval_log(hi)
    expansions = 0
    while not (f_mid <= f_lo and f_mid <= f_hi):
        if f_lo < f_hi:
            lo, mid, hi = lo - step, lo, mid
            f_lo, f_mid, f_hi = eval_log(lo), f_lo, f_mid
        else:
            lo, mid, hi = mid, hi, hi + step
            f_lo, f_mid, f_hi = f_mid, f_hi, eval_log(hi)
        expansions += 1
        if expansions >= max_expand:
            # monotone within the searched range: give back the best edge
            best = min(cache, key=cache.get)
            return 10.0**best, cache[best], False, len(cache)
    a, b = lo, hi
    c = b - _PHI * (b - a)
    d = a + _PHI * (b - a)
    fc, fd = eval_log(c), eval_log(d)
    while b - a > tol_log10:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _PHI * (b - a)
            fc = eval_log(c)
        else:
            a, c, fc = c, d, fd
            d = a + _PHI * (b - a)
            fd = eval_log(d)
    best = min(cache, key=cache.get)
    return 10.0**best, cache[best], True, len(cache)


def minimize_lambda(
    problem: SmoothingProblem,
    objective,
    lam0: float,
    tol_log10: float = GOLDEN_TOL_LOG10,
) -> LambdaSearch:
    """Minimize a fit functional over the tension parameter.

    ``objective(fit) -> float`` is re-evaluated after IRLS convergence at
    every candidate; IRLS warm-starts from the previous candidate's weights.
    """
    if lam0 <= 0 or not np.isfinite(lam0):
        lam0 = _lambda_floor(problem)
    fits: dict[float, SmoothingFit] = {}
    state = {"w": None}

    def f(lam: float) -> float:
        fit = problem.fit(lam, w_var0=state["w"])
        state["w"] = fit.weights
        fits[lam] = fit
        return objective(fit)

    lam, value, bracketed, n_eval = golden_log_search(f, lam0, tol_log10)
    if not bracketed:
        warnings.warn(
            "tension objective not bracketable; returning boundary value", RuntimeWarning
        )
    return LambdaSearch(lam=lam, value=value, fit=fits[lam], bracketed=bracketed,
                        n_evaluations=n_eval)


def _lambda_floor(problem: SmoothingProblem) -> float:
    """Scale-relative positive seed when the a priori tension is zero."""
    a_scale = float(np.mean(problem.gram_band[0])) or 1.0
    w = 1.0 / problem.noise.variance()
    x_scale = float(np.mean(np.sum(problem.basis.window**2, axis=1))) * w
    lam_sys = 1e-12 * x_scale * problem.n / max(a_scale, 1e-300)
    return lam_sys * problem.t_span / problem.n
