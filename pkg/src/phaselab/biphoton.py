"""Double-Gaussian (DG) biphoton state and its closed-form free propagation.

Conventions
-----------
With ``u = x1 - x2`` and ``v = x1 + x2`` the source amplitude is

    psi(x1, x2) ~ exp(-u**2 / (4 sigma_minus**2) - v**2 / (4 sigma_plus**2))

so that the *density* |psi|^2 has standard deviation ``sigma_minus`` along
``u`` and ``sigma_plus`` along ``v``.  Free propagation by ``z`` replaces each
``sigma**2`` in the amplitude by ``sigma**2 + i z / k``.  All lengths are in
metres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComplexField2D, Grid, JPD2

#: the grid must hold the DG out to this many widths along both the sum and
#: the difference coordinate
GRID_EXTENT_SIGMAS = 4.0


@dataclass(frozen=True)
class DGSource:
    """Physical parameters of a DG photon-pair source.

    Parameters
    ----------
    sigma_plus, sigma_minus : float
        Density widths of the sum and difference coordinates [m].
    wavelength : float
        Wavelength of the down-converted photons [m].
    """

    sigma_plus: float
    sigma_minus: float
    wavelength: float

    def __post_init__(self):
        for name in ("sigma_plus", "sigma_minus", "wavelength"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite length, got {val!r}")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @classmethod
    def from_microns(cls, sigma_plus_um: float, sigma_minus_um: float,
                     wavelength_nm: float) -> "DGSource":
        return cls(sigma_plus_um * 1e-6, sigma_minus_um * 1e-6, wavelength_nm * 1e-9)


@dataclass(frozen=True)
class PropagatedWidths:
    z: float
    sigma_plus_z: float
    sigma_minus_z: float


def sigma_minus_from_crystal(length: float, lambda_pump: float, n_pump: float) -> float:
    """Difference-coordinate width set by the crystal, ``sqrt(L lambda_p / (6 pi n_p))``."""
    for name, val in (("length", length), ("lambda_pump", lambda_pump), ("n_pump", n_pump)):
        if not (np.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be positive, got {val!r}")
    return math.sqrt(length * lambda_pump / (6.0 * math.pi * n_pump))


def schmidt_number(src: DGSource) -> float:
    r = src.sigma_plus / src.sigma_minus
    return 0.25 * (r + 1.0 / r) ** 2


def _width_at(sigma: float, z: float, k: float) -> float:
    return math.hypot(sigma, z / (k * sigma))


def widths_at(src: DGSource, z: float) -> PropagatedWidths:
    """Density widths after free propagation by ``z`` (even in ``z``)."""
    if not np.isfinite(z):
        raise ValueError(f"z must be finite, got {z!r}")
    k = src.k
    return PropagatedWidths(z, _width_at(src.sigma_plus, z, k), _width_at(src.sigma_minus, z, k))


def z_phase(src: DGSource) -> float:
    """Distance ``k sigma_plus sigma_minus`` at which both widths coincide."""
    return src.k * src.sigma_plus * src.sigma_minus


def fedorov_analytic(src: DGSource, z: float) -> float:
    w = widths_at(src, z)
    r = w.sigma_plus_z / w.sigma_minus_z
    return 0.5 * (r + 1.0 / r)


def marginal_std(src: DGSource, z: float = 0.0) -> float:
    """Standard deviation of the one-photon marginal at ``z``."""
    w = widths_at(src, z)
    return 0.5 * math.hypot(w.sigma_plus_z, w.sigma_minus_z)


class GridTooSmallError(ValueError):
    """The grid would truncate or under-sample the requested state."""


def check_grid(src: DGSource, grid: Grid, z: float) -> None:
    """Refuse grids that cannot hold the DG state at ``z``.

    The state must fit inside ``|x1 - x2| <= 4 sigma_minus(z)`` and
    ``|x1 + x2| <= 4 sigma_plus(z)``, which needs each axis to reach
    ``+-2 (sigma_plus(z) + sigma_minus(z))``.  The narrowest width must also
    be sampled at least once per pitch.
    """
    w = widths_at(src, z)
    need = 0.5 * GRID_EXTENT_SIGMAS * (w.sigma_plus_z + w.sigma_minus_z)
    narrow = min(w.sigma_plus_z, w.sigma_minus_z)
    problems = []
    for axis in (1, 2):
        lo, hi = grid.extent(axis)
        if lo > -need or hi < need:
            problems.append(f"axis {axis} spans [{lo:.4g}, {hi:.4g}] m but needs +-{need:.4g} m")
        _, dx, _ = grid.axis_params(axis)
        if dx > narrow:
            problems.append(f"axis {axis} pitch {dx:.4g} m exceeds the narrowest width {narrow:.4g} m")
    if problems:
        raise GridTooSmallError(
            f"grid cannot represent the DG state at z={z:.4g} m "
            f"(sigma+={w.sigma_plus_z:.4g} m, sigma-={w.sigma_minus_z:.4g} m): " + "; ".join(problems))


def eval_dg(src: DGSource, grid: Grid, z: float = 0.0, check: bool = True) -> ComplexField2D:
    """Evaluate the propagated DG amplitude on ``grid`` and normalise it.

    Negative ``z`` yields the complex conjugate of the state at ``|z|``.
    The analytic normalisation prefactor is not used; the field is
    renormalised numerically.
    """
    if not np.isfinite(z):
        raise ValueError(f"z must be finite, got {z!r}")
    if check:
        check_grid(src, grid, z)
    x1, x2 = grid.mesh()
    u = x1 - x2
    v = x1 + x2
    shift = 1j * z / src.k
    q_minus = src.sigma_minus ** 2 + shift
    q_plus = src.sigma_plus ** 2 + shift
    psi = np.exp(-(u * u) / (4.0 * q_minus) - (v * v) / (4.0 * q_plus))
    if z == 0.0:
        psi = psi.real.astype(np.complex128)
    return ComplexField2D(grid, psi).normalized()


def eval_phase_state(src: DGSource, grid: Grid, check: bool = True) -> ComplexField2D:
    """DG amplitude at the phase-entanglement plane ``z_phase(src)``."""
    return eval_dg(src, grid, z_phase(src), check=check)


def phase_state_phase(src: DGSource, x1, x2):
    """Closed-form phase of the state at ``z_phase``, up to a global constant.

    The modulus factorises into ``g(x1) g(x2)``; the non-separable part of the
    state sits entirely in this quadratic form.
    """
    s2 = src.sigma_plus ** 2 + src.sigma_minus ** 2
    r = src.sigma_plus / src.sigma_minus
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    return ((x1 - x2) ** 2 * r + (x1 + x2) ** 2 / r) / (4.0 * s2)


def jpd_analytic(src: DGSource, grid: Grid, z: float = 0.0, check: bool = True) -> JPD2:
    return eval_dg(src, grid, z, check=check).density()


def adequate_grid(src: DGSource, z: float, n: int = 512, sigmas: float = 6.0) -> Grid:
    """Centred square grid spanning ``+-sigmas`` times the widest width at ``z``."""
    w = widths_at(src, z)
    return Grid.centered(n, sigmas * max(w.sigma_plus_z, w.sigma_minus_z))
