"""Cleaning filters for reconstructed two-photon densities.

Images are 2D float arrays indexed ``[x1, x2]`` with unit (pixel) spacing;
frequencies are in cycles per pixel.  Functions taking a :class:`JPD2`
return a :class:`JPD2` on the same grid.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pywt
from scipy import ndimage

from .fields import JPD2, Density1D

log = logging.getLogger(__name__)

#: orthogonal Daubechies filter with 4 taps (two vanishing moments)
WAVELET = "db2"
DWT_LEVELS = 2
BUTTERWORTH_ORDER = 3
MARGINAL_POWER_FRACTION = 0.01
TV_WEIGHT_FRACTION = 0.1
TV_ITERATIONS = 100
#: Chambolle step; 1/8 guarantees the dual iteration is non-increasing
TV_STEP = 0.125


def _radial_freq(shape) -> np.ndarray:
    f1 = np.fft.fftfreq(shape[0])[:, None]
    f2 = np.fft.fftfreq(shape[1])[None, :]
    return np.hypot(f1, f2)


# --------------------------------------------------------------------------- Butterworth

def butterworth_response(f, f_lo: float, f_hi: float, order: int = BUTTERWORTH_ORDER) -> np.ndarray:
    """``H(f) = [1 / (1 + (f_lo/f)^2n)] [1 / (1 + (f/f_hi)^2n)]``, with ``H(0) = 0`` when ``f_lo > 0``."""
    f = np.asarray(f, dtype=np.float64)
    n2 = 2 * order
    with np.errstate(divide="ignore"):
        hp = 1.0 / (1.0 + (f_lo / f) ** n2) if f_lo > 0 else np.ones_like(f)
    hp = np.where(f == 0, 0.0 if f_lo > 0 else 1.0, hp)
    return hp / (1.0 + (f / f_hi) ** n2)


def butterworth_bandpass(image, f_lo: float, f_hi: float = 0.5,
                         order: int = BUTTERWORTH_ORDER) -> np.ndarray:
    """Radial Butterworth band-pass in the 2D Fourier domain.

    Parameters
    ----------
    image : ndarray, 2D, real
    f_lo, f_hi : float
        Band edges in cycles per pixel, ``0 <= f_lo < f_hi <= 0.5``.
    order : int
        Butterworth order ``n``.
    """
    if not (0 <= f_lo < f_hi <= 0.5):
        raise ValueError(f"need 0 <= f_lo < f_hi <= 0.5, got f_lo={f_lo}, f_hi={f_hi}")
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    img = np.asarray(image, dtype=np.float64)
    h = butterworth_response(_radial_freq(img.shape), f_lo, f_hi, order)
    return np.fft.ifft2(np.fft.fft2(img) * h).real


# --------------------------------------------------------------------------- wavelets

@dataclass(frozen=True)
class WaveletPyramid:
    """Output of :func:`dwt2`.

    ``approx`` is the coarsest approximation image; ``details[0]`` holds the
    coarsest ``(horizontal, vertical, diagonal)`` detail images.
    """

    approx: np.ndarray
    details: tuple
    shape: tuple
    wavelet: str

    @property
    def levels(self) -> int:
        return len(self.details)

    def with_parts(self, approx=None, details=None) -> "WaveletPyramid":
        return WaveletPyramid(self.approx if approx is None else approx,
                              self.details if details is None else tuple(details),
                              self.shape, self.wavelet)

    def coefficients(self) -> list:
        return [self.approx] + [tuple(d) for d in self.details]


def dwt2(image, levels: int = DWT_LEVELS, wavelet: str = WAVELET) -> WaveletPyramid:
    """Separable orthogonal wavelet analysis.

    Sides not divisible by ``2**levels`` are padded by reflection; the
    transform itself is periodic, so the filter bank stays orthonormal.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("dwt2 expects a 2D image")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    step = 2 ** levels
    pad = [(0, (-s) % step) for s in img.shape]
    work = np.pad(img, pad, mode="reflect") if any(p[1] for p in pad) else img
    coeffs = pywt.wavedec2(work, wavelet, mode="periodization", level=levels)
    return WaveletPyramid(coeffs[0], tuple(tuple(d) for d in coeffs[1:]), img.shape, wavelet)


def idwt2(pyr: WaveletPyramid) -> np.ndarray:
    """Inverse of :func:`dwt2`, cropped back to the original shape."""
    out = pywt.waverec2(pyr.coefficients(), pyr.wavelet, mode="periodization")
    return out[:pyr.shape[0], :pyr.shape[1]]


# --------------------------------------------------------------------------- marginal high-pass

def marginal_cutoff(marginal, fraction: float = MARGINAL_POWER_FRACTION) -> float:
    """Lowest frequency (cycles per sample) where the marginal's power spectrum drops below ``fraction`` of its peak."""
    m = np.asarray(marginal.values if isinstance(marginal, Density1D) else marginal, dtype=np.float64)
    if m.ndim != 1 or m.size < 4:
        raise ValueError("marginal must be a 1D array with at least 4 samples")
    power = np.abs(np.fft.rfft(m)) ** 2
    freqs = np.fft.rfftfreq(m.size)
    below = np.nonzero(power < fraction * power.max())[0]
    if below.size == 0 or below[0] <= 1:
        raise ValueError("marginal bandwidth is undefined (flat or unresolved marginal); "
                         "pass an explicit cutoff")
    return float(freqs[below[0]])


def raised_cosine_highpass(f, cutoff: float) -> np.ndarray:
    """0 below ``cutoff``, 1 above ``2 cutoff``, raised-cosine in between."""
    f = np.asarray(f, dtype=np.float64)
    t = np.clip((f - cutoff) / cutoff, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def marginal_highpass(approx_image, marginal=None, fraction: float = MARGINAL_POWER_FRACTION,
                      scale: float = 1.0, cutoff: float | None = None) -> np.ndarray:
    """Suppress the slowly varying structure set by the one-photon marginal.

    Parameters
    ----------
    approx_image : ndarray, 2D
    marginal : Density1D or 1D array, optional
        Marginal sampled on the full-resolution grid; used to set the cutoff.
    fraction : float
        Power fraction defining the marginal's bandwidth.
    scale : float
        Full-resolution samples per pixel of ``approx_image`` (``2**level``
        for a wavelet approximation).
    cutoff : float, optional
        Cutoff in cycles per full-resolution sample, overriding ``marginal``.
    """
    img = np.asarray(approx_image, dtype=np.float64)
    if cutoff is None:
        if marginal is None:
            raise ValueError("either a marginal or an explicit cutoff is required")
        cutoff = marginal_cutoff(marginal, fraction)
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    h = raised_cosine_highpass(_radial_freq(img.shape), cutoff * scale)
    return np.fft.ifft2(np.fft.fft2(img) * h).real


# --------------------------------------------------------------------------- total variation

def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1] = u[1:] - u[:-1]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def _div(px, py):
    d = np.zeros_like(px)
    d[0] = px[0]
    d[1:-1] = px[1:-1] - px[:-2]
    d[-1] = -px[-2]
    d[:, 0] += py[:, 0]
    d[:, 1:-1] += py[:, 1:-1] - py[:, :-2]
    d[:, -1] += -py[:, -2]
    return d


def tv_objective(u, f, weight: float) -> float:
    """``0.5 |u - f|^2 + weight * TV(u)`` with isotropic forward-difference TV."""
    gx, gy = _grad(u)
    return float(0.5 * np.sum((u - f) ** 2) + weight * np.sum(np.hypot(gx, gy)))


@dataclass(frozen=True)
class TVResult:
    image: np.ndarray
    objective: np.ndarray
    dual_objective: np.ndarray


def tv_denoise(image, weight: float | None = None, iterations: int = TV_ITERATIONS,
               return_history: bool = False):
    """Rudin-Osher-Fatemi denoising by Chambolle's dual projection.

    Minimises ``0.5 |u - f|^2 + weight * TV(u)`` with a fixed number of
    iterations.

    Parameters
    ----------
    image : ndarray, 2D
    weight : float, optional
        Regularisation weight; ``0.1 * max|image|`` by default.
    iterations : int
    return_history : bool
        Also return the primal objective and the dual objective
        ``|f - weight div p|^2`` after every iteration.
    """
    f = np.asarray(image, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("tv_denoise expects a 2D image")
    if weight is None:
        weight = TV_WEIGHT_FRACTION * float(np.abs(f).max())
    if weight < 0:
        raise ValueError(f"weight must be non-negative, got {weight}")
    if weight == 0 or iterations <= 0 or min(f.shape) < 2:
        out = f.copy()
        if return_history:
            e = np.array([tv_objective(out, f, weight)])
            return TVResult(out, e, np.array([float(np.sum(f ** 2))]))
        return out
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    primal, dual = [], []
    for _ in range(iterations):
        gx, gy = _grad(_div(px, py) - f / weight)
        norm = 1.0 + TV_STEP * np.hypot(gx, gy)
        px = (px + TV_STEP * gx) / norm
        py = (py + TV_STEP * gy) / norm
        if return_history:
            u = f - weight * _div(px, py)
            primal.append(tv_objective(u, f, weight))
            dual.append(float(np.sum(u ** 2)))
    u = f - weight * _div(px, py)
    if return_history:
        return TVResult(u, np.array(primal), np.array(dual))
    return u


# --------------------------------------------------------------------------- kernel smoothing

def kde_smooth(jpd: JPD2, bandwidth: float) -> JPD2:
    """Convolve with an isotropic Gaussian of std ``bandwidth`` pixels.

    Periodic boundaries keep the total mass unchanged.
    """
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    return jpd.with_values(ndimage.gaussian_filter(jpd.values, bandwidth, mode="wrap"))


# --------------------------------------------------------------------------- bloom baseline

@dataclass(frozen=True)
class BloomBaseline:
    """Fitted bloom structure: narrow along ``x1 - x2``, wide along the beam.

    ``sigma_b`` and ``sigma_beam`` are in pixels.  ``sigma_beam`` is the
    one-photon beam width, so the sum coordinate has width ``2 sigma_beam``.
    """

    sigma_b: float
    sigma_beam: float
    amplitude: float
    jpd: JPD2

    def __post_init__(self):
        if not (self.sigma_b > 0 and self.sigma_beam > 0):
            raise ValueError("bloom widths must be positive")


def bloom_shape(jpd: JPD2, sigma_b: float, sigma_beam: float, center: float | None = None,
                zero_diagonal: bool = True) -> np.ndarray:
    """Unit-amplitude bloom structure on ``jpd``'s grid (widths in pixels).

    With ``zero_diagonal`` the cells ``x1 == x2`` are zero: charge spilled
    from a pixel never lands on that pixel.
    """
    g = jpd.grid
    i = np.arange(g.n1)[:, None] + g.x1_0 / g.dx1
    j = np.arange(g.n2)[None, :] + g.x2_0 / g.dx2
    if center is None:
        marg = jpd.values.sum(axis=1).clip(0)
        center = float(np.dot(np.arange(g.n1) + g.x1_0 / g.dx1, marg) / marg.sum()) if marg.sum() > 0 \
            else float(i.mean())
    u = i - j
    v = 0.5 * (i + j) - center
    shape = np.exp(-0.5 * (u / sigma_b) ** 2 - 0.5 * (v / sigma_beam) ** 2)
    if zero_diagonal:
        shape = np.where(np.abs(u) < 0.5, 0.0, shape)
    return shape


def bloom_baseline(jpd: JPD2, sigma_b: float, sigma_beam: float, signal_halfwidth: float = 0.0,
                   weight: float | None = None, center: float | None = None,
                   zero_diagonal: bool = True, exclude=None) -> BloomBaseline:
    """Least-squares weighted bloom baseline.

    The amplitude is fitted over the band ``|x1 - x2| <= 3 sigma_b`` (pixels)
    with the signal band ``|x1 - x2| <= signal_halfwidth`` and the diagonal
    removed.  ``exclude`` is an optional boolean mask of further cells to
    leave out, e.g. where an anti-diagonal signal crosses the band.  When
    nothing is left to fit, a warning is issued and the caller's ``weight``
    is used.
    """
    if not (sigma_b > 0 and sigma_beam > 0):
        raise ValueError("bloom widths must be positive")
    shape = bloom_shape(jpd, sigma_b, sigma_beam, center, zero_diagonal)
    g = jpd.grid
    u = np.abs((np.arange(g.n1)[:, None] + g.x1_0 / g.dx1) - (np.arange(g.n2)[None, :] + g.x2_0 / g.dx2))
    region = (u <= 3.0 * sigma_b) & (u > max(signal_halfwidth, 0.5))
    if exclude is not None:
        region &= ~np.asarray(exclude, dtype=bool)
    if weight is None:
        if not region.any():
            warnings.warn("bloom and signal bands overlap entirely; cannot fit the bloom weight",
                          RuntimeWarning, stacklevel=2)
            raise ValueError("bloom weight cannot be fitted; pass weight explicitly")
        s = shape[region]
        weight = float(np.dot(s, jpd.values[region]) / np.dot(s, s))
    elif not region.any():
        warnings.warn("bloom and signal bands overlap entirely; using the given weight",
                      RuntimeWarning, stacklevel=2)
    return BloomBaseline(float(sigma_b), float(sigma_beam), weight, jpd.with_values(weight * shape))


def subtract_baseline(jpd: JPD2, baseline) -> JPD2:
    base = baseline.jpd if isinstance(baseline, BloomBaseline) else baseline
    if base.grid != jpd.grid:
        raise ValueError("baseline and density live on different grids")
    return jpd.with_values(jpd.values - base.values)


# --------------------------------------------------------------------------- pipelines

@dataclass(frozen=True)
class CleanResult:
    jpd: JPD2
    stages: tuple  # (stage name, mass after stage)


def clean_pipeline(jpd: JPD2, profile: str = "propagation", *, bloom=None, f_lo: float | None = None,
                   f_hi: float = 0.5, order: int = BUTTERWORTH_ORDER, ridge_width_px: float | None = None,
                   levels: int = DWT_LEVELS, fraction: float = MARGINAL_POWER_FRACTION,
                   tv_weight: float | None = None, tv_iterations: int = TV_ITERATIONS,
                   bandwidth: float = 0.5, report: bool = False):
    """Standard cleaning sequences.

    ``"propagation"``: optional bloom subtraction (``bloom=(sigma_b, sigma_beam)``
    in pixels, or a :class:`BloomBaseline`), then a Butterworth band-pass.
    ``f_lo`` defaults to ``1 / (8 ridge_width_px)`` or, without a ridge width,
    to the lowest non-zero frequency of the grid.

    ``"interference"``: wavelet split, marginal high-pass on the approximation,
    TV denoising of the details, inverse transform, then Gaussian smoothing
    with ``bandwidth`` pixels.  ``tv_weight`` defaults to ``0.1 * max|jpd|``:
    the detail images are mostly noise, so their own maximum would set a
    weight that barely smooths.

    Returns the cleaned :class:`JPD2`, or a :class:`CleanResult` listing the
    mass after every stage when ``report`` is set.
    """
    stages = [("input", jpd.mass)]
    out = jpd
    if profile == "propagation":
        if bloom is not None:
            base = bloom if isinstance(bloom, BloomBaseline) else bloom_baseline(out, *bloom)
            out = subtract_baseline(out, base)
            stages.append(("bloom", out.mass))
        if f_lo is None:
            f_lo = (1.0 / (8.0 * ridge_width_px) if ridge_width_px
                    else 1.0 / max(out.values.shape))
        f_lo = min(f_lo, 0.5 * f_hi)
        out = out.with_values(butterworth_bandpass(out.values, f_lo, f_hi, order))
        stages.append(("butterworth", out.mass))
    elif profile == "interference":
        pyr = dwt2(out.values, levels)
        marg = out.values.sum(axis=1)
        approx = marginal_highpass(pyr.approx, marg, fraction, scale=2 ** levels)
        if tv_weight is None:
            tv_weight = TV_WEIGHT_FRACTION * float(np.abs(out.values).max())
        details = [tuple(tv_denoise(d, tv_weight, tv_iterations) for d in lvl) for lvl in pyr.details]
        out = out.with_values(idwt2(pyr.with_parts(approx, details)))
        stages.append(("wavelet", out.mass))
        out = kde_smooth(out, bandwidth)
        stages.append(("kde", out.mass))
    else:
        raise ValueError(f"unknown cleaning profile {profile!r}; use 'propagation' or 'interference'")
    for name, m in stages:
        log.debug("clean_pipeline %s: mass %.6g", name, m)
    return CleanResult(out, tuple(stages)) if report else out
