"""Hot numerical kernels with a numba fast path and a pure-numpy fallback.

The numba path is used whenever numba imports cleanly; set the environment
variable ``TSPLINE_NO_NUMBA=1`` before import to force the numpy fallback.
Both paths run the same arithmetic in the same order, so results agree to
the last bit in practice (tests pin them together at 1e-15).

Kernels provided:

* ``basis_windows`` -- evaluate the ``K`` possibly-nonzero B-spline basis
  functions (or a derivative) at each point, returned in window form
  (first active index + ``K`` values per row).
* ``gram_band`` -- accumulate ``sum_i w_i v_i v_i^T`` of windowed rows into a
  symmetric banded matrix (lower form).
* ``scatter_vector`` -- accumulate ``sum_i w_i v_i`` of windowed rows.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_DISABLE = os.environ.get("TSPLINE_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

if not _ENV_DISABLE:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        _HAVE_NUMBA = False
else:
    _HAVE_NUMBA = False


def using_numba() -> bool:
    """True when the compiled kernel path is active."""
    return _HAVE_NUMBA


# ---------------------------------------------------------------------------
# Basis evaluation.
#
# Classic knot-difference triangle with the derivative sweep (the standard
# "all derivatives of the nonzero basis functions" algorithm).  ``span`` is
# the index j with knots[j] <= u < knots[j+1]; the active functions are
# j-K+1 .. j.  The d-th derivative values are written into out[0..K-1].
# ---------------------------------------------------------------------------


def _ders_point(knots, p, span, u, d, ndu, a, out):
    # p = K-1 (degree). ndu: (p+1, p+1) scratch; a: (2, p+1) scratch.
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        # left[j] = u - knots[span+1-j], right[j] = knots[span+j] - u
        saved = 0.0
        for r in range(j):
            denom = (knots[span + r + 1] - u) + (u - knots[span + 1 - j + r])
            ndu[j, r] = denom
            temp = ndu[r, j - 1] / denom
            ndu[r, j] = saved + (knots[span + r + 1] - u) * temp
            saved = (u - knots[span + 1 - j + r]) * temp
        ndu[j, j] = saved

    if d == 0:
        for r in range(p + 1):
            out[r] = ndu[r, p]
        return

    for r in range(p + 1):
        a[0, 0] = 1.0
        s1 = 0
        s2 = 1
        dd = 0.0
        for k in range(1, d + 1):
            dd = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                dd = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                dd += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                dd += a[s2, k] * ndu[r, pk]
            s1, s2 = s2, s1
        out[r] = dd

    # scale by p!/(p-d)!
    fac = 1.0
    for k in range(d):
        fac *= p - k
    for r in range(p + 1):
        out[r] *= fac


def _basis_windows_loop(knots, order, spans, u, d, vals):
    p = order - 1
    ndu = np.empty((order, order))
    a = np.empty((2, order))
    for i in range(u.shape[0]):
        _ders_point(knots, p, spans[i], u[i], d, ndu, a, vals[i])


def _basis_windows_numpy(knots, order, spans, u, d, vals):
    # Same triangle vectorized across evaluation points.
    n = u.shape[0]
    p = order - 1
    ndu = np.empty((n, order, order))
    ndu[:, 0, 0] = 1.0
    for j in range(1, p + 1):
        saved = np.zeros(n)
        for r in range(j):
            right = knots[spans + r + 1] - u
            left = u - knots[spans + 1 - j + r]
            denom = right + left
            ndu[:, j, r] = denom
            temp = ndu[:, r, j - 1] / denom
            ndu[:, r, j] = saved + right * temp
            saved = left * temp
        ndu[:, j, j] = saved

    if d == 0:
        vals[:] = ndu[:, :, p]
        return

    a = np.empty((n, 2, order))
    for r in range(p + 1):
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        dd = np.zeros(n)
        for k in range(1, d + 1):
            dd = np.zeros(n)
            rk = r - k
            pk = p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                dd = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                dd = dd + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                dd = dd + a[:, s2, k] * ndu[:, r, pk]
            s1, s2 = s2, s1
        vals[:, r] = dd

    fac = 1.0
    for k in range(d):
        fac *= p - k
    vals *= fac


# ---------------------------------------------------------------------------
# Banded accumulation.
# ---------------------------------------------------------------------------


def _gram_band_loop(starts, win, w, band):
    n, k = win.shape
    for i in range(n):
        s = starts[i]
        wi = w[i]
        for a in range(k):
            va = wi * win[i, a]
            for b in range(a, k):
                band[b - a, s + a] += va * win[i, b]


def _gram_band_numpy(starts, win, w, band):
    n, k = win.shape
    for a in range(k):
        wa = w * win[:, a]
        for b in range(a, k):
            np.add.at(band[b - a], starts + a, wa * win[:, b])


def _scatter_vector_loop(starts, win, w, out):
    n, k = win.shape
    for i in range(n):
        s = starts[i]
        wi = w[i]
        for a in range(k):
            out[s + a] += wi * win[i, a]


def _scatter_vector_numpy(starts, win, w, out):
    k = win.shape[1]
    for a in range(k):
        np.add.at(out, starts + a, w * win[:, a])


if _HAVE_NUMBA:
    _ders_point = njit(cache=True)(_ders_point)
    _basis_windows_impl = njit(cache=True)(_basis_windows_loop)
    _gram_band_impl = njit(cache=True)(_gram_band_loop)
    _scatter_vector_impl = njit(cache=True)(_scatter_vector_loop)
else:
    _basis_windows_impl = _basis_windows_numpy
    _gram_band_impl = _gram_band_numpy
    _scatter_vector_impl = _scatter_vector_numpy


def find_spans(knots: np.ndarray, order: int, u: np.ndarray) -> np.ndarray:
    """Knot-span index for each point, clipped to the nonempty interior spans.

    The last span is closed on the right, so ``u == knots[-1]`` evaluates by
    left-continuity.
    """
    lo = order - 1
    hi = knots.shape[0] - order - 1
    spans = np.searchsorted(knots, u, side="right") - 1
    return np.clip(spans, lo, hi).astype(np.int64)


def basis_windows(knots: np.ndarray, order: int, u: np.ndarray, d: int = 0):
    """Evaluate d-th derivatives of the active basis functions at each point.

    Returns ``(starts, vals)`` where row ``i`` of ``vals`` holds the values of
    basis functions ``starts[i] .. starts[i]+order-1`` at ``u[i]``.  For
    ``d >= order`` the values are identically zero.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    spans = find_spans(knots, order, u)
    starts = spans - (order - 1)
    vals = np.zeros((u.shape[0], order))
    if d < order and u.shape[0] > 0:
        _basis_windows_impl(knots, order, spans, u, d, vals)
    return starts, vals


def gram_band(starts, win, w, n_splines: int) -> np.ndarray:
    """Symmetric banded ``sum_i w_i v_i v_i^T`` in lower form.

    ``band[r, j]`` holds entry ``(j + r, j)``; shape ``(order, n_splines)``.
    """
    k = win.shape[1]
    band = np.zeros((k, n_splines))
    if win.shape[0]:
        _gram_band_impl(
            np.ascontiguousarray(starts, dtype=np.int64),
            np.ascontiguousarray(win),
            np.ascontiguousarray(w, dtype=np.float64),
            band,
        )
    return band


def scatter_vector(starts, win, w, n_splines: int) -> np.ndarray:
    """Accumulate ``sum_i w_i v_i`` of windowed rows into a length-M vector."""
    out = np.zeros(n_splines)
    if win.shape[0]:
        _scatter_vector_impl(
            np.ascontiguousarray(starts, dtype=np.int64),
            np.ascontiguousarray(win),
            np.ascontiguousarray(w, dtype=np.float64),
            out,
        )
    return out


def window_dot(starts, win, coeffs) -> np.ndarray:
    """Row-wise dot product of windowed rows with a coefficient vector."""
    k = win.shape[1]
    idx = starts[:, None] + np.arange(k)[None, :]
    return np.einsum("ij,ij->i", win, coeffs[idx])


def window_matmul(starts, win, dense) -> np.ndarray:
    """Product of a windowed (n x M) matrix with a dense (M x q) matrix."""
    n, k = win.shape
    q = dense.shape[1]
    out = np.empty((n, q))
    ar = np.arange(k)[None, :]
    block = max(1, 4_000_000 // max(1, k * q))
    for i0 in range(0, n, block):
        sl = slice(i0, min(n, i0 + block))
        idx = starts[sl, None] + ar
        out[sl] = np.einsum("ia,iaq->iq", win[sl], dense[idx])
    return out
