"""Synthetic track generation for ensemble experiments.

Velocity is drawn from a stationary Gaussian process with the Matérn-type
spectrum ``S(omega) = A^2 / (omega^2 + damping^2)^(p/2)`` -- flat at low
frequency with an ``omega^-p`` tail -- synthesized in the frequency domain
and integrated to positions.  Observation noise is applied afterwards, with
optional replacement contamination from an outlier distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .distributions import NoiseModel
from .errors import InvalidInputError
from .track import TrackSeries

__all__ = ["MaternSpec", "matern_track", "contaminate", "stride"]


@dataclass(frozen=True)
class MaternSpec:
    """Parameters of the synthetic velocity process.

    ``u_rms`` is the rms velocity per component (m/s), ``damping`` the
    inverse decorrelation time (1/s), ``slope`` the high-frequency spectral
    decay exponent p, ``n_samples`` the number of position samples at
    spacing ``dt`` seconds.
    """

    u_rms: float = 0.20
    damping: float = 1.0 / 1800.0
    slope: float = 3.0
    n_samples: int = 720
    dt: float = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.u_rms <= 0:
            raise InvalidInputError("u_rms must be positive")
        if self.slope <= 1:
            raise InvalidInputError("slope must exceed 1")
        if self.n_samples < 2 or self.dt <= 0 or self.damping <= 0:
            raise InvalidInputError("invalid sampling parameters")


def _matern_velocity(spec: MaternSpec, rng: np.random.Generator) -> np.ndarray:
    """One velocity component, synthesized at 2x length and cropped."""
    n_gen = 1 << int(np.ceil(np.log2(2 * spec.n_samples)))
    freqs = np.fft.fftfreq(n_gen, spec.dt)
    omega = 2 * np.pi * freqs
    shape = (omega**2 + spec.damping**2) ** (-spec.slope / 2.0)
    # calibrate so the discrete spectrum sums to the target variance
    amp2 = spec.u_rms**2 * n_gen * spec.dt / np.sum(shape)
    s_f = amp2 * shape
    half = n_gen // 2
    coeff = np.zeros(n_gen, dtype=np.complex128)
    # real DC and Nyquist bins, complex-normal interior, Hermitian symmetry
    coeff[0] = rng.standard_normal()
    coeff[1:half] = (
        rng.standard_normal(half - 1) + 1j * rng.standard_normal(half - 1)
    ) / np.sqrt(2.0)
    coeff[half] = rng.standard_normal()
    coeff[half + 1 :] = np.conj(coeff[1:half][::-1])
    dft = np.sqrt(s_f * n_gen / spec.dt) * coeff
    u = np.fft.ifft(dft).real
    return u[: spec.n_samples]


def matern_track(spec: MaternSpec, bivariate: bool = True) -> TrackSeries:
    """Generate a track whose observations equal the true path (no noise yet).

    Components are independent; positions come from cumulative trapezoid
    integration of the synthesized velocity.
    """
    rng = np.random.default_rng(spec.seed)
    times = np.arange(spec.n_samples) * spec.dt
    x = cumulative_trapezoid(_matern_velocity(spec, rng), dx=spec.dt, initial=0.0)
    y = None
    if bivariate:
        y = cumulative_trapezoid(_matern_velocity(spec, rng), dx=spec.dt, initial=0.0)
    return TrackSeries(
        times=times,
        x=x.copy(),
        y=y.copy() if y is not None else None,
        truth_times=times,
        truth_x=x,
        truth_y=y,
    )


def contaminate(
    track: TrackSeries,
    noise: NoiseModel,
    alpha: float = 0.0,
    outlier: NoiseModel | None = None,
    seed: int = 0,
) -> TrackSeries:
    """Perturb observations with noise, replacing a fraction by outlier draws.

    Each observation is flagged with probability ``alpha``; flagged points
    take their error (both components for bivariate tracks) from the outlier
    distribution instead of the base model.  The flags are recorded for
    truth-aware scoring.
    """
    if not 0 <= alpha < 1:
        raise InvalidInputError("alpha must be in [0, 1)")
    if alpha > 0 and outlier is None:
        raise InvalidInputError("contamination fraction set but no outlier model given")
    rng = np.random.default_rng(seed)
    n = track.n
    mask = rng.random(n) < alpha if alpha > 0 else np.zeros(n, dtype=bool)

    def draw():
        eps = noise.sample(rng, n)
        if alpha > 0:
            eps = np.where(mask, outlier.sample(rng, n), eps)
        return eps

    x = track.x + draw()
    y = track.y + draw() if track.is_bivariate else None
    return TrackSeries(
        times=track.times,
        x=x,
        y=y,
        truth_times=track.truth_times,
        truth_x=track.truth_x,
        truth_y=track.truth_y,
        outlier_mask=mask,
    )


def stride(track: TrackSeries, k: int) -> TrackSeries:
    """Subsample to every k-th observation (truth kept at full resolution)."""
    return track.stride(k)
