"""Paraxial coherent-optics operators acting on one photon coordinate.

Every operator takes a :class:`ComplexField2D` and a photon axis (1 or 2) and
returns a new field.  Propagation uses the paraxial transfer function
``H(nu) = exp(-i pi lambda z nu**2)``; the constant factors
``exp(i k z)`` and ``1/sqrt(i lambda z)`` are dropped since only densities and
density ratios are observed downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComplexField2D, JPD2, Grid, _axis_index

#: fraction of spectral power allowed outside the band used by the aliasing guard
GUARD_POWER_TOL = 1e-8


class AliasingError(ValueError):
    """Propagation distance too long for the grid's sampling."""

    def __init__(self, msg, max_safe_z):
        super().__init__(msg)
        self.max_safe_z = max_safe_z


def nyquist_max_z(n: int, dx: float, wavelength: float) -> float:
    """Distance up to which the full-band transfer function is alias-free, ``n dx^2 / lambda``."""
    return n * dx * dx / wavelength


def occupied_bandwidth(values: np.ndarray, axis0: int, dx: float, tol: float = GUARD_POWER_TOL) -> float:
    """Smallest ``nu`` such that spectral power beyond ``|nu|`` is at most ``tol`` of the total."""
    spec = np.fft.fft(values, axis=axis0)
    power = np.sum(np.abs(spec) ** 2, axis=1 - axis0)
    total = power.sum()
    if total == 0:
        return 0.0
    nu = np.abs(np.fft.fftfreq(values.shape[axis0], dx))
    order = np.argsort(nu, kind="stable")[::-1]
    tail = np.cumsum(power[order]) / total
    # tail[i] = power at frequencies >= nu[order[i]]
    beyond = np.nonzero(tail > tol)[0]
    if beyond.size == 0:
        return 0.0
    return float(nu[order[beyond[0]]])


def max_safe_z(field: ComplexField2D, axis: int, wavelength: float,
               tol: float = GUARD_POWER_TOL) -> float:
    """Longest distance for which the transfer function is sampled finely
    enough over the band the field actually occupies.

    Over the occupied band ``|nu| <= nu_b`` the chirp phase advances by at most
    ``pi`` per frequency bin when ``lambda |z| nu_b <= L / 2`` (``L = n dx``).
    With ``nu_b`` at Nyquist this reduces to ``n dx^2 / lambda``.
    """
    ax = _axis_index(axis)
    n, dx, _ = field.grid.axis_params(axis)
    nu_b = occupied_bandwidth(field.values, ax, dx, tol)
    if nu_b == 0.0:
        return math.inf
    return n * dx / (2.0 * wavelength * nu_b)


def fresnel_propagate_1d_axis(field: ComplexField2D, axis: int, z: float, wavelength: float,
                              guard: str = "band", tol: float = GUARD_POWER_TOL) -> ComplexField2D:
    """Free-space propagate ``field`` by ``z`` along one photon coordinate.

    Parameters
    ----------
    guard : {"band", "nyquist", "off"}
        ``"nyquist"`` enforces ``|z| <= n dx^2 / lambda``.  ``"band"`` (default)
        applies the same chirp-sampling rule to the occupied bandwidth, which
        admits longer distances for band-limited fields.
    """
    ax = _axis_index(axis)
    if not np.isfinite(z):
        raise ValueError(f"z must be finite, got {z!r}")
    if z == 0.0:
        return field
    n, dx, _ = field.grid.axis_params(axis)
    if guard == "nyquist":
        zmax = nyquist_max_z(n, dx, wavelength)
    elif guard == "band":
        zmax = max(max_safe_z(field, axis, wavelength, tol), nyquist_max_z(n, dx, wavelength))
    elif guard == "off":
        zmax = math.inf
    else:
        raise ValueError(f"unknown guard {guard!r}")
    if abs(z) > zmax:
        raise AliasingError(
            f"|z|={abs(z):.6g} m aliases on axis {axis} (n={n}, dx={dx:.4g} m); "
            f"maximum safe z is {zmax:.6g} m", zmax)
    nu = np.fft.fftfreq(n, dx)
    h = np.exp(-1j * math.pi * wavelength * z * nu * nu)
    shape = [1, 1]
    shape[ax] = n
    out = np.fft.ifft(np.fft.fft(field.values, axis=ax) * h.reshape(shape), axis=ax)
    return ComplexField2D(field.grid, out)


def fresnel_propagate(field: ComplexField2D, z: float, wavelength: float, **kw) -> ComplexField2D:
    """Propagate both photons by ``z``."""
    out = fresnel_propagate_1d_axis(field, 1, z, wavelength, **kw)
    return fresnel_propagate_1d_axis(out, 2, z, wavelength, **kw)


def quadratic_phase(field: ComplexField2D, axis: int, c: float, wavelength: float) -> ComplexField2D:
    """Multiply by ``exp(i pi c x^2 / lambda)`` along one coordinate (thin lens: ``c = -1/f``)."""
    ax = _axis_index(axis)
    if c == 0.0:
        return field
    x = field.grid.coords(axis)
    q = np.exp(1j * math.pi * c * x * x / wavelength)
    shape = [1, 1]
    shape[ax] = x.size
    return ComplexField2D(field.grid, field.values * q.reshape(shape))


def scale_field(field: ComplexField2D, axis: int, s: float) -> ComplexField2D:
    """Apply ``g(x) -> sqrt(|s|) g(s x)`` along one coordinate.

    Realised by relabelling the samples: the pitch becomes ``dx/|s|`` and the
    axis is reversed when ``s < 0``.  The L2 norm is unchanged.
    """
    ax = _axis_index(axis)
    if s == 0 or not np.isfinite(s):
        raise ValueError(f"scale factor must be finite and non-zero, got {s!r}")
    n, dx, x0 = field.grid.axis_params(axis)
    vals = field.values * math.sqrt(abs(s))
    if s > 0:
        grid = field.grid.with_axis(axis, n, dx / s, x0 / s)
    else:
        x_last = x0 + (n - 1) * dx
        grid = field.grid.with_axis(axis, n, dx / abs(s), x_last / s)
        vals = np.flip(vals, axis=ax)
    return ComplexField2D(grid, vals)


@dataclass(frozen=True)
class LensFoldMap:
    """Single-lens imaging ``u -> lens(f) -> zbar`` expressed as
    ``Q[c] V[s] R[z]``: a free propagation by ``z`` followed by a scaling and a
    quadratic phase."""

    u: float
    f: float
    zbar: float
    z: float
    s: float
    c: float

    @property
    def image_distance(self) -> float:
        return self.u * self.f / (self.u - self.f)


def lens_fold_map(u: float, f: float, zbar: float) -> LensFoldMap:
    if not (u > 0 and f > 0):
        raise ValueError(f"object distance and focal length must be positive, got u={u}, f={f}")
    if not zbar > f:
        raise ValueError(f"zbar={zbar!r} must lie beyond the focal plane f={f!r}")
    z = u - zbar * f / (zbar - f)
    s = 1.0 / (1.0 - zbar / f)
    c = 1.0 / (zbar - f)
    return LensFoldMap(u, f, zbar, z, s, c)


def zbar_for_z(u: float, f: float, z: float) -> float:
    """Detection distance whose folded propagation distance equals ``z``."""
    d = u - z
    if d <= f:
        raise ValueError(f"z={z!r} is not reachable with u={u}, f={f}")
    return d * f / (d - f)


def apply_lens_fold(field_at_z: ComplexField2D, fold: LensFoldMap, wavelength: float) -> ComplexField2D:
    """Turn the state propagated to ``fold.z`` into the detected state at ``fold.zbar``."""
    out = field_at_z
    for axis in (1, 2):
        out = scale_field(out, axis, fold.s)
        out = quadratic_phase(out, axis, fold.c, wavelength)
    return out


def lens_cascade(field: ComplexField2D, u: float, f: float, zbar: float, wavelength: float,
                 **kw) -> ComplexField2D:
    """Explicit ``R[zbar] Q[-1/f] R[u]`` on both coordinates, for checking the fold map."""
    out = fresnel_propagate(field, u, wavelength, **kw)
    for axis in (1, 2):
        out = quadratic_phase(out, axis, -1.0 / f, wavelength)
    return fresnel_propagate(out, zbar, wavelength, **kw)


def relay_4f(field: ComplexField2D, f1: float, f2: float) -> ComplexField2D:
    """Ideal 4f relay: inverted image magnified by ``f2/f1``, no excess phase."""
    s = -f1 / f2
    return scale_field(scale_field(field, 1, s), 2, s)


@dataclass(frozen=True)
class SlitSpec:
    d: float
    a: float

    def __post_init__(self):
        if not (self.d > self.a > 0):
            raise ValueError(f"slits overlap or are empty: need d > a > 0, got d={self.d}, a={self.a}")


def double_slit_mask(x, slit: SlitSpec):
    """Two boxes of width ``a`` centred at ``+-d/2``; edges count as open."""
    x = np.asarray(x, dtype=float)
    box = lambda t: (np.abs(t) <= 0.5)
    out = (box((x - slit.d / 2) / slit.a) | box((x + slit.d / 2) / slit.a)).astype(np.int8)
    return out if out.ndim else int(out)


#: minimum number of samples across one slit
MIN_SLIT_SAMPLES = 8


def interference_density(psi_ds: ComplexField2D, slit: SlitSpec, f3: float, wavelength: float) -> JPD2:
    """Far-field two-photon density behind a double slit.

    Masks both coordinates, takes the two-variable DFT and maps spatial
    frequency ``nu`` to detector position ``x = lambda f3 nu``.
    """
    g = psi_ds.grid
    for axis in (1, 2):
        _, dx, _ = g.axis_params(axis)
        if slit.a / dx < MIN_SLIT_SAMPLES:
            raise ValueError(
                f"slit width {slit.a:.4g} m spans {slit.a / dx:.2f} samples on axis {axis}; "
                f"need at least {MIN_SLIT_SAMPLES}")
    m1 = double_slit_mask(g.x1, slit)
    m2 = double_slit_mask(g.x2, slit)
    masked = psi_ds.values * m1[:, None] * m2[None, :]
    if not np.any(masked):
        raise ValueError("no amplitude passes the slits")
    spec = np.fft.fftshift(np.fft.fft2(masked))
    dens = np.abs(spec) ** 2
    scale = wavelength * f3
    axes = []
    for n, dx in ((g.n1, g.dx1), (g.n2, g.dx2)):
        nu0 = np.fft.fftshift(np.fft.fftfreq(n, dx))[0]
        axes.append((scale / (n * dx), scale * nu0))
    out_grid = Grid(g.n1, g.n2, axes[0][0], axes[1][0], axes[0][1], axes[1][1])
    return JPD2(out_grid, dens / dens.sum())
