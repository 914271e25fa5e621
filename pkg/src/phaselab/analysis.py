"""Entanglement metrics on two-photon densities and the Fedorov sweep."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .biphoton import DGSource, fedorov_analytic, widths_at, z_phase
from .camera import CameraModel, DGPairs, FrameStack, pairs_for_occupancy, render_frames
from .denoise import clean_pipeline
from .fields import JPD2, Density1D
from .fitting import FitResultDG, dg_model, fit_dg_2d
from .optics import lens_fold_map, zbar_for_z
from .recon import Gamma4, fedorov_from_jpd, gamma_4d, reduce_gamma

log = logging.getLogger(__name__)

#: relative asymmetry above which marginal_g1 warns
ASYMMETRY_TOL = 0.05
#: cells with rho above this fraction of its peak form the ridge band
RIDGE_FRACTION = 0.05


class AsymmetryWarning(UserWarning):
    """The density is not exchange symmetric enough for a single marginal."""


def _check_symmetric(jpd: JPD2) -> None:
    v = jpd.values
    if v.shape[0] != v.shape[1]:
        warnings.warn("density grid is not square; marginals of x1 and x2 differ",
                      AsymmetryWarning, stacklevel=3)
        return
    norm = np.linalg.norm(v)
    if norm > 0 and np.linalg.norm(v - v.T) / norm >= ASYMMETRY_TOL:
        warnings.warn(f"density asymmetry {np.linalg.norm(v - v.T) / norm:.3f} exceeds "
                      f"{ASYMMETRY_TOL}; the single-marginal picture is approximate",
                      AsymmetryWarning, stacklevel=3)


def marginal_g1(jpd: JPD2, axis: int = 1) -> Density1D:
    """One-photon marginal of ``x_axis`` normalised to unit mass (per cell)."""
    _check_symmetric(jpd)
    g = jpd.grid
    vals = jpd.values.sum(axis=1) if axis == 1 else jpd.values.sum(axis=0)
    total = vals.sum()
    if total == 0:
        raise ValueError("density has no mass")
    x0, dx = (g.x1_0, g.dx1) if axis == 1 else (g.x2_0, g.dx2)
    return Density1D(x0, dx, vals / total)


def delta_g2(jpd: JPD2) -> np.ndarray:
    """``rho(x1, x2) - G1(x1) G1(x2)`` with unit-mass ``rho`` and marginals.

    The marginals are the row and column sums of ``rho``, so the map sums
    to zero.
    """
    _check_symmetric(jpd)
    v = jpd.values / jpd.mass
    return v - np.outer(v.sum(axis=1), v.sum(axis=0))


def ridge_correlation(dg2: np.ndarray, rho: JPD2 | np.ndarray, fraction: float = RIDGE_FRACTION) -> float:
    """Pearson correlation of ``dg2`` with ``rho`` over cells where ``rho >= fraction * max(rho)``."""
    r = rho.values if isinstance(rho, JPD2) else np.asarray(rho)
    mask = r >= fraction * r.max()
    if mask.sum() < 3:
        raise ValueError("ridge band has fewer than 3 cells")
    return float(np.corrcoef(np.asarray(dg2)[mask], r[mask])[0, 1])


def fringe_visibility(marginal: Density1D, period: float) -> float:
    """Fringe contrast of a 1D density at spatial period ``period``.

    Twice the magnitude of the Fourier component at ``1 / period`` over the
    total mass; equals the modulation depth ``V`` of ``(1 + V cos) * envelope``
    when the envelope spans many periods.
    """
    if period < 4 * marginal.dx:
        raise ValueError(f"period {period:.4g} is resolved by fewer than 4 samples "
                         f"(spacing {marginal.dx:.4g})")
    m = marginal.values
    total = m.sum()
    if total <= 0:
        raise ValueError("marginal has no mass")
    comp = np.sum(m * np.exp(-2j * np.pi * marginal.x / period))
    return float(min(1.0, 2.0 * abs(comp) / total))


# --------------------------------------------------------------------------- reconstruction pipeline

def fedorov_from_fit(fit: FitResultDG, grid) -> float:
    """Fedorov ratio of the fitted DG density sampled on ``grid``."""
    x1, x2 = grid.mesh()
    model = dg_model(x1, x2, 1.0, fit.sigma_plus_fit, fit.sigma_minus_fit,
                     fit.center_minus, fit.center_plus)
    return fedorov_from_jpd(JPD2(grid, model))


def fill_diagonal(rho: JPD2, fit: FitResultDG) -> JPD2:
    """Replace the cells ``x1 == x2`` by the fitted DG.

    Those cells hold only pairs landing on one pixel in different rows (a
    binary pixel cannot register two photons), so they are systematically
    low; filters would otherwise spread the deficit into the ridge.
    """
    g = rho.grid
    n = min(g.n1, g.n2)
    idx = np.arange(n)
    x1, x2 = g.x1[idx], g.x2[idx]
    vals = rho.values.copy()
    vals[idx, idx] = dg_model(x1, x2, fit.amplitude, fit.sigma_plus_fit, fit.sigma_minus_fit,
                              fit.center_minus, fit.center_plus, fit.background)
    return rho.with_values(vals)


@dataclass(frozen=True)
class Reconstruction:
    gamma: Gamma4
    rho: JPD2
    cleaned: JPD2
    fit: FitResultDG
    fedorov: float


def reconstruct(stack: FrameStack, eta: float, mu: float, roi=None, *, profile: str = "propagation",
                bloom=None, keep: str = "x", workers: int = 1, allow_large: bool = False) -> Reconstruction:
    """Frames to pair map, reduced density, cleaned density, DG fit and Fedorov ratio.

    The Fedorov ratio is taken from the fitted DG density on the
    reconstruction grid: moments of the raw map are dominated by sampling
    noise far from the ridge and by the undetectable same-pixel pairs.
    """
    g = gamma_4d(stack, eta, mu, roi, workers=workers, allow_large=allow_large)
    rho = reduce_gamma(g, keep)
    first = fit_dg_2d(rho, exclude_diagonal=True)
    width_px = max(first.sigma_plus_fit, first.sigma_minus_fit) / rho.grid.dx1
    cleaned = clean_pipeline(fill_diagonal(rho, first), profile, bloom=bloom, ridge_width_px=width_px)
    fit = fit_dg_2d(cleaned, exclude_diagonal=True, background=True)
    return Reconstruction(g, rho, cleaned, fit, fedorov_from_fit(fit, rho.grid))


# --------------------------------------------------------------------------- Fedorov sweep

@dataclass(frozen=True)
class SweepPoint:
    """One detection plane of a Fedorov sweep.

    Widths are in the detector plane.  Points that could not be computed
    carry ``fedorov = nan`` and the reason in ``error``.
    """

    zbar: float
    z: float
    fedorov: float
    sigma_fit_plus: float
    sigma_fit_minus: float
    source: str
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def phase_plane_zbar(src: DGSource, u: float, f: float) -> float:
    """Detection distance behind the lens that images the phase-entanglement plane."""
    return zbar_for_z(u, f, -z_phase(src))


def _sweep_point(src, u, f, zbar, mode, camera, frames, roi, workers):
    try:
        if not (f < zbar <= u * f / (u - f)):
            raise ValueError(f"zbar={zbar * 1e3:.4g} mm outside ({f * 1e3:.4g}, "
                             f"{u * f / (u - f) * 1e3:.4g}] mm")
        fold = lens_fold_map(u, f, zbar)
        if mode == "analytic":
            w = widths_at(src, fold.z)
            scale = 1.0 / abs(fold.s)
            return SweepPoint(zbar, fold.z, fedorov_analytic(src, fold.z),
                              w.sigma_plus_z * scale, w.sigma_minus_z * scale, "analytic")
        pairs = DGPairs.folded(src, fold)
        cam = camera
        if cam.mu == 0:
            cam = _with_mu(cam, pairs_for_occupancy(pairs, cam))
        stack = render_frames(pairs, cam, frames, workers=workers)
        rec = reconstruct(stack, cam.eta, cam.mu, roi, workers=workers)
        return SweepPoint(zbar, fold.z, rec.fedorov, rec.fit.sigma_plus_fit,
                          rec.fit.sigma_minus_fit, "reconstructed")
    except (ValueError, ArithmeticError) as exc:
        log.warning("sweep point zbar=%g failed: %s", zbar, exc)
        return SweepPoint(zbar, math.nan, math.nan, math.nan, math.nan, mode, str(exc))


def _with_mu(cam: CameraModel, mu: float) -> CameraModel:
    from dataclasses import replace
    return replace(cam, mu=mu)


def fedorov_sweep(src: DGSource, u: float, f: float, zbar_list, mode: str = "analytic", *,
                  camera: CameraModel | None = None, frames: int = 20000, roi=None,
                  include_phase_plane: bool = False, workers: int = 1) -> list[SweepPoint]:
    """Fedorov ratio at a list of detection distances behind a single lens.

    Parameters
    ----------
    src : DGSource
    u, f : float
        Source-to-lens distance and focal length.
    zbar_list : sequence of float
        Detection distances; points outside ``(f, u f / (u - f)]`` are
        reported with an error and the sweep continues.
    mode : {"analytic", "simulate"}
        Closed form, or frames rendered with ``camera`` (``mu = 0`` picks a
        rate for 5 % peak occupancy) and reconstructed.
    include_phase_plane : bool
        Add the detection distance imaging the phase-entanglement plane.

    Returns
    -------
    list of SweepPoint, ordered by ``zbar``.
    """
    if mode not in ("analytic", "simulate"):
        raise ValueError(f"mode must be 'analytic' or 'simulate', got {mode!r}")
    if mode == "simulate" and camera is None:
        raise ValueError("simulate mode needs a camera model")
    zbars = [float(z) for z in zbar_list]
    if include_phase_plane:
        zbars.append(phase_plane_zbar(src, u, f))
    zbars = sorted(set(zbars))
    if mode == "simulate":
        # rendering and accumulation are already threaded per point
        return [_sweep_point(src, u, f, zb, mode, camera, frames, roi, workers) for zb in zbars]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda zb: _sweep_point(src, u, f, zb, mode, None, 0, None, 1), zbars))
