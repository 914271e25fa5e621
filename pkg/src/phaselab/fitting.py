"""Gaussian and double-Gaussian least-squares fits.

The double-Gaussian model for a two-photon density is

    A exp(-(x1 - x2 - du)^2 / (2 s_-^2) - (x1 + x2 - dv)^2 / (2 s_+^2)) [+ b]

so ``s_-`` and ``s_+`` are the standard deviations of the difference and
sum coordinates; for a density propagated a distance z they are
``sigma_-(z)`` and ``sigma_+(z)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .fields import JPD2

#: function evaluations allowed per fit
MAX_NFEV = 2000


@dataclass(frozen=True)
class Gaussian1DFit:
    std: float
    amplitude: float
    center: float
    background: float
    residual: float
    converged: bool


@dataclass(frozen=True)
class FitResultDG:
    """Double-Gaussian fit of a two-photon density.

    ``residual`` is the rms of the fit residual over the fitted cells and
    ``rel_residual`` that rms over the peak amplitude.
    """

    sigma_plus_fit: float
    sigma_minus_fit: float
    amplitude: float
    center_minus: float
    center_plus: float
    background: float
    residual: float
    rel_residual: float
    converged: bool
    message: str = ""

    def report(self) -> str:
        """Plain ``key=value`` lines."""
        keys = ("sigma_plus_fit", "sigma_minus_fit", "amplitude", "center_minus", "center_plus",
                "background", "residual", "rel_residual", "converged")
        return "".join(f"{k}={getattr(self, k)!r}\n" for k in keys)


def _moments(x, y):
    w = np.clip(y, 0.0, None)
    if not w.sum() > 0:
        w = np.abs(y)
    mu = np.dot(x, w) / w.sum()
    sd = math.sqrt(max(np.dot((x - mu) ** 2, w) / w.sum(), 0.0))
    return mu, sd


def fit_gaussian_1d(x, y, background: bool = False) -> Gaussian1DFit:
    """Least-squares fit of ``a exp(-(x - c)^2 / (2 s^2)) [+ b]`` to samples ``(x, y)``.

    Initial values come from the second moments of the positive part of ``y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 8:
        raise ValueError(f"need at least 8 points to fit a Gaussian, got {x.size}")
    mu0, sd0 = _moments(x, y)
    step = float(np.min(np.diff(np.sort(x))))
    sd0 = max(sd0, step)
    p0 = [float(y.max()), mu0, sd0] + ([0.0] if background else [])
    scale = max(abs(y).max(), 1e-300)

    def resid(p):
        m = p[0] * np.exp(-0.5 * ((x - p[1]) / p[2]) ** 2)
        if background:
            m = m + p[3]
        return (m - y) / scale

    sol = least_squares(resid, p0, method="lm", max_nfev=MAX_NFEV, x_scale="jac")
    p = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)) * scale)
    return Gaussian1DFit(abs(float(p[2])), float(p[0]), float(p[1]),
                         float(p[3]) if background else 0.0, rms, bool(sol.success))


def dg_model(x1, x2, amplitude, sigma_plus, sigma_minus, du=0.0, dv=0.0, background=0.0):
    u = x1 - x2 - du
    v = x1 + x2 - dv
    return amplitude * np.exp(-0.5 * (u / sigma_minus) ** 2 - 0.5 * (v / sigma_plus) ** 2) + background


def _line_profiles(vals, mask, step):
    """Mean along lines of constant ``i - j`` and of constant ``i + j``."""
    n1, n2 = vals.shape
    i, j = np.indices(vals.shape)
    w = mask.astype(np.float64)
    d = (i - j + n2 - 1).ravel()
    s = (i + j).ravel()
    def mean_on(idx, size):
        num = np.bincount(idx, (vals * w).ravel(), minlength=size)
        den = np.bincount(idx, w.ravel(), minlength=size)
        ok = den > 0
        return np.where(ok, num / np.where(ok, den, 1), np.nan)
    diff = mean_on(d, n1 + n2 - 1)
    summ = mean_on(s, n1 + n2 - 1)
    du = (np.arange(n1 + n2 - 1) - (n2 - 1)) * step
    return du, diff, summ


def fit_dg_2d(jpd: JPD2, mask=None, exclude_diagonal: bool = False,
              background: bool = False) -> FitResultDG:
    """Double-Gaussian fit to a two-photon density.

    One-dimensional fits to the mean along the diagonal direction (giving the
    sum width) and the anti-diagonal direction (difference width) seed a joint
    2D least-squares refinement.

    Parameters
    ----------
    jpd : JPD2
        Density on a grid with equal pitch on both axes.
    mask : ndarray of bool, optional
        Cells to fit; all by default.
    exclude_diagonal : bool
        Drop the cells ``i == j`` (self-pairs carry no pair information in
        reconstructed maps).
    background : bool
        Fit a constant offset as well.
    """
    g = jpd.grid
    if not math.isclose(g.dx1, g.dx2, rel_tol=1e-9):
        raise ValueError("fit_dg_2d needs equal pitch on both axes")
    vals = jpd.values
    if mask is None:
        mask = np.ones(vals.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool).copy()
    if exclude_diagonal:
        k = min(vals.shape)
        mask[np.arange(k), np.arange(k)] = False
    if mask.sum() < 8:
        raise ValueError("need at least 8 cells to fit")
    dx = g.dx1
    x1, x2 = g.x1[:, None], g.x2[None, :]
    # origin offset of the sum coordinate: x1 + x2 = (i + j) dx + x1_0 + x2_0
    off_v = g.x1_0 + g.x2_0
    off_u = g.x1_0 - g.x2_0

    du_axis, diff_prof, sum_prof = _line_profiles(vals, mask, dx)
    ok = np.isfinite(diff_prof)
    f_minus = _seed_fit(du_axis[ok] + off_u, diff_prof[ok], dx)
    v_axis = np.arange(sum_prof.size) * dx + off_v
    ok = np.isfinite(sum_prof)
    f_plus = _seed_fit(v_axis[ok], sum_prof[ok], dx)

    amp0 = float(np.max(vals[mask]))
    p0 = [amp0, f_plus[2], f_minus[2], f_minus[1], f_plus[1]] + ([0.0] if background else [])
    scale = max(abs(vals[mask]).max(), 1e-300)
    X1 = np.broadcast_to(x1, vals.shape)[mask]
    X2 = np.broadcast_to(x2, vals.shape)[mask]
    y = vals[mask]

    def resid(p):
        b = p[5] if background else 0.0
        return (dg_model(X1, X2, p[0], p[1], p[2], p[3], p[4], b) - y) / scale

    sol = least_squares(resid, p0, method="lm", max_nfev=MAX_NFEV, x_scale="jac")
    p = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)) * scale)
    amp = float(p[0])
    return FitResultDG(
        sigma_plus_fit=abs(float(p[1])), sigma_minus_fit=abs(float(p[2])), amplitude=amp,
        center_minus=float(p[3]), center_plus=float(p[4]),
        background=float(p[5]) if background else 0.0, residual=rms,
        rel_residual=rms / abs(amp) if amp else math.inf,
        converged=bool(sol.success), message=str(sol.message))


def _seed_fit(x, y, step):
    """(amplitude, centre, std) from a 1D profile; moments if the fit cannot run."""
    mu, sd = _moments(x, y)
    if x.size >= 8:
        try:
            f = fit_gaussian_1d(x, y)
            if f.converged and f.std > 0 and np.isfinite(f.std):
                return f.amplitude, f.center, max(f.std, step / 4)
        except ValueError:
            pass
    return float(np.max(y)), mu, max(sd, step)
