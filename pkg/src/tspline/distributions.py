"""Error models for observation noise.

Provides Gaussian, Student-t and two-component mixture models with the
operations the smoothing machinery needs: densities, cdf/quantiles,
truncated second moments, the per-observation IRLS variance weight, the
distribution of two-component distance errors, and the Anderson-Darling
goodness-of-fit statistic.

All scales are in meters.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import InsufficientDataError, InvalidInputError

__all__ = [
    "NoiseModel",
    "Gaussian",
    "StudentT",
    "Mixture",
    "gps_default",
    "variance_in_range",
    "tukey_weight",
    "anderson_darling",
    "distance_error_distribution",
    "RayleighDistance",
    "NumericDistance",
    "MixtureDistance",
    "error_autocorrelation",
]


class NoiseModel:
    """Common interface for symmetric, zero-mean error models."""

    def pdf(self, eps):
        raise NotImplementedError

    def cdf(self, eps):
        raise NotImplementedError

    def ppf(self, p):
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def scale(self) -> float:
        """Characteristic width used for integration ranges and floors."""
        raise NotImplementedError

    def support_scale(self) -> float:
        """Width of the widest component (bounds effective support)."""
        return self.scale()

    def irls_weight(self, eps):
        """Effective per-observation variance ``w(eps) = -eps * p / p'``."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def distance_distribution(self):
        return distance_error_distribution(self)


@dataclass(frozen=True)
class Gaussian(NoiseModel):
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidInputError("sigma must be positive")

    def pdf(self, eps):
        eps = np.asarray(eps, dtype=np.float64)
        return np.exp(-0.5 * (eps / self.sigma) ** 2) / (self.sigma * np.sqrt(2 * np.pi))

    def cdf(self, eps):
        return special.ndtr(np.asarray(eps, dtype=np.float64) / self.sigma)

    def ppf(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any(p <= 0) or np.any(p >= 1):
            raise InvalidInputError("quantile argument must be inside (0, 1)")
        return self.sigma * special.ndtri(p)

    def variance(self):
        return self.sigma**2

    def scale(self):
        return self.sigma

    def irls_weight(self, eps):
        return np.full_like(np.asarray(eps, dtype=np.float64), self.sigma**2)

    def sample(self, rng, n):
        return rng.normal(0.0, self.sigma, n)


@dataclass(frozen=True)
class StudentT(NoiseModel):
    """Student-t with a width parameter; variance is ``sigma^2 nu/(nu-2)``."""

    sigma: float
    nu: float

    def __post_init__(self):
        if self.sigma <= 0 or self.nu <= 0:
            raise InvalidInputError("sigma and nu must be positive")

    def _norm(self) -> float:
        return np.exp(
            special.gammaln((self.nu + 1) / 2)
            - special.gammaln(self.nu / 2)
            - 0.5 * np.log(self.nu * np.pi)
        ) / self.sigma

    def pdf(self, eps):
        z = np.asarray(eps, dtype=np.float64) / self.sigma
        return self._norm() * (1 + z**2 / self.nu) ** (-(self.nu + 1) / 2)

    def cdf(self, eps):
        return special.stdtr(self.nu, np.asarray(eps, dtype=np.float64) / self.sigma)

    def ppf(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any(p <= 0) or np.any(p >= 1):
            raise InvalidInputError("quantile argument must be inside (0, 1)")
        return self.sigma * special.stdtrit(self.nu, p)

    def variance(self):
        if self.nu <= 2:
            return np.inf
        return self.sigma**2 * self.nu / (self.nu - 2)

    def scale(self):
        return self.sigma

    def irls_weight(self, eps):
        eps = np.asarray(eps, dtype=np.float64)
        return self.sigma**2 * (self.nu + (eps / self.sigma) ** 2) / (self.nu + 1)

    def sample(self, rng, n):
        return self.sigma * rng.standard_t(self.nu, n)


@dataclass(frozen=True)
class Mixture(NoiseModel):
    """``(1-alpha) * noise + alpha * outlier`` contamination model."""

    alpha: float
    noise: NoiseModel
    outlier: NoiseModel

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise InvalidInputError("alpha must be in [0, 1)")

    def pdf(self, eps):
        return (1 - self.alpha) * self.noise.pdf(eps) + self.alpha * self.outlier.pdf(eps)

    def cdf(self, eps):
        return (1 - self.alpha) * self.noise.cdf(eps) + self.alpha * self.outlier.cdf(eps)

    def ppf(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=np.float64))
        if np.any(p <= 0) or np.any(p >= 1):
            raise InvalidInputError("quantile argument must be inside (0, 1)")
        lo = np.minimum(self.noise.ppf(p), self.outlier.ppf(p))
        hi = np.maximum(self.noise.ppf(p), self.outlier.ppf(p))
        # bisection on the cdf; tolerance 1e-9 in probability
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            c = self.cdf(mid)
            take_lo = c < p
            lo = np.where(take_lo, mid, lo)
            hi = np.where(take_lo, hi, mid)
            if np.max(np.abs(c - p)) < 1e-9 and np.max(hi - lo) < 1e-9 * max(
                self.scale(), 1.0
            ):
                break
        out = 0.5 * (lo + hi)
        return out if out.shape != (1,) else float(out[0])

    def variance(self):
        return (1 - self.alpha) * self.noise.variance() + self.alpha * self.outlier.variance()

    def scale(self):
        return self.noise.scale()

    def support_scale(self):
        return max(self.noise.support_scale(), self.outlier.support_scale())

    def irls_weight(self, eps):
        # Density-weighted harmonic combination of the component weights;
        # finite at eps = 0 by construction.
        eps = np.asarray(eps, dtype=np.float64)
        pn = (1 - self.alpha) * self.noise.pdf(eps)
        po = self.alpha * self.outlier.pdf(eps)
        return (pn + po) / (pn / self.noise.irls_weight(eps) + po / self.outlier.irls_weight(eps))

    def sample(self, rng, n):
        base = self.noise.sample(rng, n)
        out = self.outlier.sample(rng, n)
        take = rng.random(n) < self.alpha
        return np.where(take, out, base)


def gps_default() -> StudentT:
    """Receiver error model fitted to motionless-GPS data: t(8.5 m, 4.5)."""
    return StudentT(8.5, 4.5)


def variance_in_range(model: NoiseModel, a: float, b: float) -> float:
    """Truncated (unnormalized) second moment ``int_a^b z^2 p(z) dz``."""
    if not a < b:
        raise InvalidInputError("need a < b")
    if np.isneginf(a) and np.isposinf(b) and np.isfinite(model.variance()):
        return model.variance()
    s = model.support_scale()
    pts = [p for p in (-s, -model.scale(), 0.0, model.scale(), s) if a < p < b]
    val, _ = integrate.quad(
        lambda z: z * z * model.pdf(z), a, b, points=pts or None, epsrel=1e-10, limit=200
    )
    return val


def tukey_weight(z, scale: float, cutoff: float = 4.685):
    """Tukey biweight as an effective variance ``z/psi(z)``.

    Beyond ``cutoff * scale`` the weight is ``+inf`` (the observation is
    excluded; ``1/w`` is zero).
    """
    z = np.asarray(z, dtype=np.float64)
    frac = z / (cutoff * scale)
    with np.errstate(divide="ignore"):
        w = scale**2 * (1 - frac**2) ** -2
    return np.where(np.abs(frac) < 1, w, np.inf)


def anderson_darling(samples, model: NoiseModel, restrict=None) -> float:
    """Anderson-Darling statistic of the samples against the model.

    ``restrict=(a, b)`` keeps only samples inside ``[a, b]`` and scores them
    against the conditional (renormalized) distribution on that interval.
    """
    z = np.sort(np.asarray(samples, dtype=np.float64))
    if restrict is not None:
        a, b = restrict
        z = z[(z >= a) & (z <= b)]
        fa, fb = float(model.cdf(a)), float(model.cdf(b))
        if fb - fa <= 0:
            raise InvalidInputError("restriction interval has no probability mass")
        f = (model.cdf(z) - fa) / (fb - fa)
    else:
        f = model.cdf(z)
    n = z.shape[0]
    if n < 8:
        raise InsufficientDataError("need at least 8 samples")
    f = np.clip(f, 1e-12, 1 - 1e-12)
    i = np.arange(1, n + 1)
    return float(-n - np.mean((2 * i - 1) * (np.log(f) + np.log1p(-f[::-1]))))


# ---------------------------------------------------------------------------
# Distance (two-component) error distributions.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RayleighDistance:
    """Distance distribution for isotropic Gaussian components."""

    sigma: float

    def pdf(self, d):
        d = np.asarray(d, dtype=np.float64)
        return d / self.sigma**2 * np.exp(-0.5 * (d / self.sigma) ** 2)

    def cdf(self, d):
        d = np.asarray(d, dtype=np.float64)
        return -np.expm1(-0.5 * (d / self.sigma) ** 2)

    def ppf(self, p):
        p = np.asarray(p, dtype=np.float64)
        return self.sigma * np.sqrt(-2 * np.log1p(-p))

    def mode(self):
        return self.sigma

    def truncated_second_moment(self, q: float) -> float:
        # int_0^q d^2 p(d) dd for the Rayleigh
        u = 0.5 * (q / self.sigma) ** 2
        return 2 * self.sigma**2 * (1 - np.exp(-u) * (1 + u))


class NumericDistance:
    """Distance distribution of ``sqrt(ex^2 + ey^2)`` for iid components.

    Built by quadrature of the product density over angle on a radial grid;
    the tabulated cdf is accurate to well below 1e-3.
    """

    _N_ANGLE = 48
    _N_BULK = 3072
    _N_TAIL = 1024

    def __init__(self, component: NoiseModel, r_max: float | None = None):
        self.component = component
        r_bulk = float(component.ppf(0.999)) * 1.5
        if r_max is None:
            r_max = float(component.ppf(1 - 1e-7)) * 2.0
        theta, tw = np.polynomial.legendre.leggauss(self._N_ANGLE)
        theta = (theta + 1) * (np.pi / 8)  # [0, pi/4]; x8 by symmetry
        tw = tw * (np.pi / 8) * 8
        # dense uniform grid through the bulk, geometric into the tail
        r = np.concatenate(
            [
                np.linspace(0.0, r_bulk, self._N_BULK),
                np.geomspace(r_bulk, max(r_max, 2 * r_bulk), self._N_TAIL + 1)[1:],
            ]
        )
        px = component.pdf(np.outer(r, np.cos(theta)))
        py = component.pdf(np.outer(r, np.sin(theta)))
        self._r = r
        self._pdf = r * ((px * py) @ tw)
        cdf = integrate.cumulative_trapezoid(self._pdf, r, initial=0.0)
        self._total = cdf[-1]
        self._cdf = cdf

    def pdf(self, d):
        return np.interp(np.asarray(d, dtype=np.float64), self._r, self._pdf, right=0.0)

    def cdf(self, d):
        return np.interp(np.asarray(d, dtype=np.float64), self._r, self._cdf, right=self._total)

    def ppf(self, p):
        p = np.asarray(p, dtype=np.float64)
        if np.any(p >= self._total):
            raise InvalidInputError("quantile beyond tabulated range")
        return np.interp(p, self._cdf, self._r)

    def mode(self):
        return float(self._r[np.argmax(self._pdf)])

    def truncated_second_moment(self, q: float) -> float:
        m = self._r <= q
        return float(np.trapz(self._r[m] ** 2 * self._pdf[m], self._r[m]))


class MixtureDistance:
    """Distance distribution when whole observations are contaminated."""

    def __init__(self, alpha: float, base, outlier):
        self.alpha = alpha
        self.base = base
        self.outlier = outlier

    def pdf(self, d):
        return (1 - self.alpha) * self.base.pdf(d) + self.alpha * self.outlier.pdf(d)

    def cdf(self, d):
        return (1 - self.alpha) * self.base.cdf(d) + self.alpha * self.outlier.cdf(d)

    def ppf(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=np.float64))
        lo = np.zeros_like(p)
        hi = np.maximum(self.base.ppf(p), self.outlier.ppf(p))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            c = self.cdf(mid)
            take_lo = c < p
            lo = np.where(take_lo, mid, lo)
            hi = np.where(take_lo, hi, mid)
        out = 0.5 * (lo + hi)
        return out if out.shape != (1,) else float(out[0])

    def mode(self):
        return self.base.mode()

    def truncated_second_moment(self, q):
        return (1 - self.alpha) * self.base.truncated_second_moment(q) + (
            self.alpha * self.outlier.truncated_second_moment(q)
        )


@lru_cache(maxsize=32)
def _numeric_distance_cached(component: NoiseModel) -> NumericDistance:
    return NumericDistance(component)


def distance_error_distribution(model: NoiseModel):
    """Distribution of ``sqrt(ex^2 + ey^2)`` for iid per-axis errors.

    Gaussian components give the Rayleigh closed form; Student-t components
    are tabulated numerically.  For a mixture, whole observations are either
    clean or contaminated in both components, so the distance distribution is
    the corresponding mixture of component distance distributions.
    """
    if isinstance(model, Gaussian):
        return RayleighDistance(model.sigma)
    if isinstance(model, StudentT):
        return _numeric_distance_cached(model)
    if isinstance(model, Mixture):
        return MixtureDistance(
            model.alpha,
            distance_error_distribution(model.noise),
            distance_error_distribution(model.outlier),
        )
    raise InvalidInputError(f"no distance distribution for {type(model).__name__}")


def error_autocorrelation(tau, t_fast: float = 100.0, t_slow: float = 760.0, offset: float = 1.35):
    """Empirical autocorrelation of receiver position errors vs lag (seconds).

    Documented constant-generator for optional off-diagonal error covariances;
    no experiment in this package uses correlated noise.
    """
    tau = np.asarray(tau, dtype=np.float64)
    return np.exp(np.maximum(-tau / t_fast, -tau / t_slow - offset))
