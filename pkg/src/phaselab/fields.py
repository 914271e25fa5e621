"""Sampled two-coordinate fields and densities.

Both containers share a :class:`Grid`: ``n1`` samples along the first photon
coordinate ``x1`` (array axis 0) and ``n2`` along ``x2`` (array axis 1).
Values are immutable once a container is built; every transform returns a
new object.

``ComplexField2D`` holds a wavefunction normalised as a continuous density,
``sum |psi|^2 dx1 dx2 = 1``.  ``JPD2`` holds probability mass *per cell*, so a
normalised density sums to one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform sampling of the (x1, x2) plane."""

    n1: int
    n2: int
    dx1: float
    dx2: float
    x1_0: float
    x2_0: float

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError(f"grid needs at least 2 samples per axis, got {self.n1}x{self.n2}")
        if not (self.dx1 > 0 and self.dx2 > 0):
            raise ValueError(f"grid pitch must be positive, got dx1={self.dx1}, dx2={self.dx2}")

    @classmethod
    def centered(cls, n: int, half_width: float, n2: int | None = None,
                 half_width2: float | None = None) -> "Grid":
        """Grid symmetric about the origin, ``n`` samples spanning ``[-half_width, half_width)``.

        The sample at index ``n // 2`` sits exactly on zero, which keeps FFT
        based operators free of half-sample shifts.
        """
        n2 = n if n2 is None else n2
        half_width2 = half_width if half_width2 is None else half_width2
        dx1 = 2.0 * half_width / n
        dx2 = 2.0 * half_width2 / n2
        return cls(n, n2, dx1, dx2, -(n // 2) * dx1, -(n2 // 2) * dx2)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def x1(self) -> np.ndarray:
        return self.x1_0 + self.dx1 * np.arange(self.n1)

    @property
    def x2(self) -> np.ndarray:
        return self.x2_0 + self.dx2 * np.arange(self.n2)

    def coords(self, axis: int) -> np.ndarray:
        """Sample coordinates along photon axis 1 or 2."""
        return self.x1 if _axis_index(axis) == 0 else self.x2

    def axis_params(self, axis: int) -> tuple[int, float, float]:
        """``(n, dx, x0)`` of photon axis 1 or 2."""
        if _axis_index(axis) == 0:
            return self.n1, self.dx1, self.x1_0
        return self.n2, self.dx2, self.x2_0

    def with_axis(self, axis: int, n: int, dx: float, x0: float) -> "Grid":
        if _axis_index(axis) == 0:
            return replace(self, n1=n, dx1=dx, x1_0=x0)
        return replace(self, n2=n, dx2=dx, x2_0=x0)

    def extent(self, axis: int) -> tuple[float, float]:
        n, dx, x0 = self.axis_params(axis)
        return x0, x0 + (n - 1) * dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")


def _axis_index(axis: int) -> int:
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis!r}")
    return axis - 1


def _frozen(values: np.ndarray, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ComplexField2D:
    """Complex biphoton amplitude psi(x1, x2) on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values, np.complex128)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    # spec-facing aliases for the grid metadata
    n1 = property(lambda self: self.grid.n1)
    n2 = property(lambda self: self.grid.n2)
    dx1 = property(lambda self: self.grid.dx1)
    dx2 = property(lambda self: self.grid.dx2)
    x1_0 = property(lambda self: self.grid.x1_0)
    x2_0 = property(lambda self: self.grid.x2_0)

    def norm2(self) -> float:
        """Continuous L2 norm squared, ``sum |psi|^2 dx1 dx2``."""
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx1 * self.grid.dx2)

    def normalized(self) -> "ComplexField2D":
        n2 = self.norm2()
        if not np.isfinite(n2) or n2 <= 0:
            raise ValueError("cannot normalise a field with zero or non-finite norm")
        return ComplexField2D(self.grid, self.values / np.sqrt(n2))

    def density(self) -> "JPD2":
        """Per-cell probability ``|psi|^2 dx1 dx2``, renormalised to unit mass."""
        p = np.abs(self.values) ** 2
        return JPD2(self.grid, p / p.sum())


@dataclass(frozen=True)
class JPD2:
    """Real two-photon density rho(x1, x2), stored as mass per grid cell.

    Reconstructed densities can carry small negative values from sampling
    noise.  They are counted in ``n_negative`` and kept as they are; use
    :meth:`clipped` to remove them explicitly.
    """

    grid: Grid
    values: np.ndarray
    n_negative: int = field(init=False)

    def __post_init__(self):
        vals = _frozen(self.values, np.float64)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("density contains non-finite values")
        object.__setattr__(self, "values", vals)
        neg = int(np.count_nonzero(vals < 0))
        object.__setattr__(self, "n_negative", neg)
        if neg:
            log.debug("JPD2 carries %d negative cells (min %.3g)", neg, vals.min())

    n1 = property(lambda self: self.grid.n1)
    n2 = property(lambda self: self.grid.n2)
    dx1 = property(lambda self: self.grid.dx1)
    dx2 = property(lambda self: self.grid.dx2)
    x1_0 = property(lambda self: self.grid.x1_0)
    x2_0 = property(lambda self: self.grid.x2_0)

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    def normalized(self) -> "JPD2":
        m = self.mass
        if not np.isfinite(m) or m == 0:
            raise ValueError("cannot normalise a density with zero total mass")
        return JPD2(self.grid, self.values / m)

    def clipped(self) -> "JPD2":
        """Copy with negative cells set to zero."""
        return JPD2(self.grid, np.clip(self.values, 0.0, None))

    def with_values(self, values: np.ndarray) -> "JPD2":
        return JPD2(self.grid, values)

    def transpose(self) -> "JPD2":
        g = self.grid
        return JPD2(Grid(g.n2, g.n1, g.dx2, g.dx1, g.x2_0, g.x1_0), self.values.T)


@dataclass(frozen=True)
class Density1D:
    """One-photon density on a uniform 1D grid, mass per cell."""

    x0: float
    dx: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, np.float64))

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.values.size)

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    def mean(self) -> float:
        return float(np.sum(self.x * self.values) / self.values.sum())

    def std(self) -> float:
        w = self.values / self.values.sum()
        mu = np.sum(self.x * w)
        return float(np.sqrt(np.sum((self.x - mu) ** 2 * w)))
