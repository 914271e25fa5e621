"""Pair-correlation estimates from binary frame stacks.

The central quantity is the per-pixel-pair estimator

    Gamma_ij = ln(1 + (<c_i c_j> - P_ij) / ((1 - <c_i>)(1 - <c_j>))) / (2 eta^2 mu)

where ``<c_i c_j>`` averages same-frame products and ``P_ij`` stands in for
``<c_i><c_j>``.  By default ``P_ij`` is the product of pixels in adjacent
frames, which are statistically independent.

Coincidences are accumulated as integer counts, so every result is
bit-identical for a given stack whatever the number of workers.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .camera import MAX_OCCUPANCY, FrameStack, OccupancyWarning
from .fields import JPD2, Grid

log = logging.getLogger(__name__)

#: floor applied to the logarithm's argument
LN_FLOOR = 1e-9
#: largest ROI side accepted without ``allow_large=True``
MAX_ROI_SIDE = 96
#: frames per accumulation task
_CHUNK_FRAMES = 8192


@dataclass(frozen=True)
class ROI:
    """Rectangular region of interest in pixels: columns ``x0:x0+w``, rows ``y0:y0+h``."""

    x0: int
    y0: int
    w: int
    h: int

    @property
    def n_pixels(self) -> int:
        return self.w * self.h

    @classmethod
    def full(cls, stack: FrameStack) -> "ROI":
        return cls(0, 0, stack.width, stack.height)

    @classmethod
    def centered(cls, stack: FrameStack, w: int, h: int) -> "ROI":
        return cls((stack.width - w) // 2, (stack.height - h) // 2, w, h)

    def check(self, stack: FrameStack) -> None:
        if self.w < 1 or self.h < 1:
            raise ValueError(f"ROI must be non-empty, got {self.w}x{self.h}")
        if (self.x0 < 0 or self.y0 < 0 or self.x0 + self.w > stack.width
                or self.y0 + self.h > stack.height):
            raise ValueError(f"ROI {self} lies outside the {stack.width}x{stack.height} frame")


def _resolve_roi(stack: FrameStack, roi) -> ROI:
    if roi is None:
        roi = ROI.full(stack)
    elif not isinstance(roi, ROI):
        roi = ROI(*(int(v) for v in roi))
    roi.check(stack)
    return roi


def frames_csr(stack: FrameStack, roi: ROI):
    """Lit pixels of every frame inside ``roi`` in compressed-row form.

    Returns ``(indptr, indices, cols, rows)``; ``indices`` is the flattened
    ROI index ``row * w + col`` and ``cols``/``rows`` are ROI-relative.
    """
    sub = stack.frames[:, roi.y0:roi.y0 + roi.h, roi.x0:roi.x0 + roi.w]
    flat = sub.reshape(stack.M, -1)
    frame_idx, indices = np.nonzero(flat)
    indptr = np.zeros(stack.M + 1, dtype=np.int64)
    np.cumsum(np.bincount(frame_idx, minlength=stack.M), out=indptr[1:])
    indices = indices.astype(np.int32)
    rows, cols = np.divmod(indices, roi.w)
    return indptr, indices, cols, rows


def _frame_tasks(m: int, workers: int):
    """Frame ranges ``[a, b)`` for parallel accumulation."""
    n_tasks = max(1, min(math.ceil(m / _CHUNK_FRAMES), 4 * max(workers, 1)))
    edges = np.linspace(0, m, n_tasks + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _count_pairs(indptr, indices, n_pixels, workers):
    """Integer same-frame and next-frame coincidence counts over the whole stack."""
    m = indptr.size - 1
    tasks = _frame_tasks(m, workers)

    def run(task):
        a, b = task
        end = min(b + 1, m)  # one frame of overlap for the shifted product
        ptr = indptr[a:end + 1]
        same, shifted = kernels.coincidence_counts(ptr - ptr[0], indices[ptr[0]:ptr[-1]], n_pixels)
        same = same.astype(np.int64)
        if end > b:  # remove the overlap frame's own coincidences
            last = indices[indptr[b]:indptr[b + 1]]
            np.subtract.at(same, (last[:, None], last[None, :]), 1)
        return same, shifted.astype(np.int64)

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, tasks))
    else:
        parts = [run(t) for t in tasks]
    same = np.zeros((n_pixels, n_pixels), dtype=np.int64)
    shifted = np.zeros_like(same)
    for s, t in parts:  # integer sums: order cannot matter
        same += s
        shifted += t
    return same, shifted


@dataclass(frozen=True)
class PairMoments:
    """Frame-averaged moments over an ROI.

    Attributes
    ----------
    mean : ndarray, shape (N,)
        ``<c_i>``.
    same : ndarray, shape (N, N)
        ``<c_i c_j>`` over the M frames.
    shifted : ndarray, shape (N, N)
        ``<c_i^k c_j^(k+1)>`` over the M - 1 adjacent frame pairs (not symmetrised).
    """

    roi: ROI
    n_frames: int
    mean: np.ndarray
    same: np.ndarray
    shifted: np.ndarray

    def __iter__(self):
        yield self.same
        yield self.shifted

    def all_pairs_product(self) -> np.ndarray:
        """Exact estimate of ``<c_i><c_j>`` from all distinct frame pairs."""
        m = self.n_frames
        return (m * np.outer(self.mean, self.mean) - self.same) / (m - 1)


def ensemble_averages(stack: FrameStack, roi=None, workers: int = 1) -> PairMoments:
    """Same-frame and adjacent-frame pixel products averaged over the stack.

    Parameters
    ----------
    stack : FrameStack
        Binary frames, ``M >= 2``.
    roi : ROI or tuple, optional
        ``(x0, y0, w, h)``; the whole frame by default.
    workers : int
        Threads used for accumulation.  Results do not depend on it.
    """
    roi = _resolve_roi(stack, roi)
    if stack.M < 2:
        raise ValueError("ensemble averages need at least two frames")
    indptr, indices, _, _ = frames_csr(stack, roi)
    same, shifted = _count_pairs(indptr, indices, roi.n_pixels, workers)
    m = stack.M
    mean = np.diag(same) / m
    return PairMoments(roi, m, mean, same / m, shifted / (m - 1))


def gamma_estimator(cc, ci, cj, product, eta: float, mu: float, floor: float = LN_FLOOR):
    """Elementwise pair estimator; returns ``(gamma, n_clamped)``.

    Parameters
    ----------
    cc : array_like
        ``<c_i c_j>``.
    ci, cj : array_like
        ``<c_i>`` and ``<c_j>``.
    product : array_like
        Estimate of ``<c_i><c_j>`` from independent frames.
    floor : float
        Arguments of the logarithm at or below this are replaced by it.
    """
    if not (0 < eta <= 1 and mu > 0):
        raise ValueError(f"need 0 < eta <= 1 and mu > 0, got eta={eta}, mu={mu}")
    cc, ci, cj, product = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64)
                                                for a in (cc, ci, cj, product)))
    denom = (1.0 - ci) * (1.0 - cj)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = 1.0 + (cc - product) / denom
    bad = ~(arg > floor)  # also catches NaN from saturated pixels
    n_clamped = int(np.count_nonzero(bad))
    arg = np.where(bad, floor, arg)
    return np.log(arg) / (2.0 * eta * eta * mu), n_clamped


@dataclass(frozen=True)
class Gamma4:
    """Pixel-pair correlation map over an ROI.

    ``values[i, j]`` with ``i = row * w + col`` (ROI relative).  The diagonal
    ``i == j`` carries no pair information and is set to zero.
    """

    roi: ROI
    values: np.ndarray
    eta: float
    mu: float
    pitch: float
    x_coords: np.ndarray
    y_coords: np.ndarray
    n_clamped: int = 0
    n_frames: int = 0
    mean: np.ndarray | None = field(default=None, repr=False)

    def as4d(self) -> np.ndarray:
        """View indexed ``[y_i, x_i, y_j, x_j]``."""
        h, w = self.roi.h, self.roi.w
        return self.values.reshape(h, w, h, w)

    def asymmetry(self) -> float:
        """``max|G_ij - G_ji| / max|G|``."""
        top = np.abs(self.values).max()
        return float(np.abs(self.values - self.values.T).max() / top) if top > 0 else 0.0


def gamma_4d(stack: FrameStack, eta: float, mu: float, roi=None, *, product: str = "shifted",
             floor: float = LN_FLOOR, allow_large: bool = False, workers: int = 1) -> Gamma4:
    """Pixel-pair correlation map of a binary stack.

    Parameters
    ----------
    stack : FrameStack
    eta, mu : float
        Detection efficiency and mean pairs per frame.
    roi : ROI or tuple, optional
    product : {"shifted", "all-pairs"}
        How ``<c_i><c_j>`` is estimated: adjacent-frame products, or the exact
        average over all distinct frame pairs.
    floor : float
        Floor for the logarithm's argument; clamped entries are counted.
    allow_large : bool
        Needed for ROIs wider or taller than 96 pixels.
    workers : int
        Accumulation threads; the result is independent of it.
    """
    roi = _resolve_roi(stack, roi)
    if max(roi.w, roi.h) > MAX_ROI_SIDE and not allow_large:
        raise ValueError(f"ROI {roi.w}x{roi.h} exceeds {MAX_ROI_SIDE} px per side; "
                         "pass allow_large=True to accept the memory cost "
                         f"({8 * roi.n_pixels ** 2 / 2**20:.0f} MiB per map)")
    mom = ensemble_averages(stack, roi, workers=workers)
    peak = float(mom.mean.max()) if mom.mean.size else 0.0
    if peak > MAX_OCCUPANCY:
        warnings.warn(f"peak pixel occupancy {peak:.3f} exceeds {MAX_OCCUPANCY}; "
                      "the estimator is biased at high occupancy", OccupancyWarning, stacklevel=2)
    if product == "shifted":
        p = 0.5 * (mom.shifted + mom.shifted.T)
    elif product == "all-pairs":
        p = mom.all_pairs_product()
    else:
        raise ValueError(f"product must be 'shifted' or 'all-pairs', got {product!r}")
    gam, n_clamped = gamma_estimator(mom.same, mom.mean[:, None], mom.mean[None, :], p,
                                     eta, mu, floor)
    np.fill_diagonal(gam, 0.0)
    if n_clamped:
        log.info("gamma_4d: %d entries clamped at ln floor %g", n_clamped, floor)
    cam = stack.geometry()
    xs = cam.pixel_center_x(roi.x0 + np.arange(roi.w))
    ys = cam.pixel_center_y(roi.y0 + np.arange(roi.h))
    return Gamma4(roi, gam, eta, mu, stack.pitch, xs, ys, n_clamped, stack.M, mom.mean)


def reduce_gamma(g: Gamma4, keep: str = "x") -> JPD2:
    """Sum the map over one coordinate of each photon.

    ``keep="x"`` gives ``rho(x_i, x_j) = sum over y_i, y_j``; ``keep="y"``
    sums over the columns instead.
    """
    g4 = g.as4d()
    if keep == "x":
        vals, coords = g4.sum(axis=(0, 2)), g.x_coords
    elif keep == "y":
        vals, coords = g4.sum(axis=(1, 3)), g.y_coords
    else:
        raise ValueError(f"keep must be 'x' or 'y', got {keep!r}")
    n = coords.size
    if n < 2:
        raise ValueError("reduction needs at least two pixels along the kept axis")
    grid = Grid(n, n, g.pitch, g.pitch, float(coords[0]), float(coords[0]))
    return JPD2(grid, vals)


def reduce_x(g: Gamma4) -> JPD2:
    """Two-photon density over the column coordinates of both photons."""
    return reduce_gamma(g, "x")


# --------------------------------------------------------------------------- peak histograms

@dataclass(frozen=True)
class PeakHistogram:
    """Pair-coordinate histogram averaged over frames, background removed.

    ``values[row, col]``; column ``c`` corresponds to offset ``offsets_x[c]``
    in pixels (a sum of column indices, or a difference).
    """

    mode: str
    values: np.ndarray
    offsets_x: np.ndarray
    offsets_y: np.ndarray
    raw: np.ndarray
    background: np.ndarray

    def profile(self, axis: str = "x") -> np.ndarray:
        """1D histogram along ``axis`` (summed over the other)."""
        if axis == "x":
            return self.values.sum(axis=0)
        if axis == "y":
            return self.values.sum(axis=1)
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")

    def offsets(self, axis: str = "x") -> np.ndarray:
        return self.offsets_x if axis == "x" else self.offsets_y


def _peak_histogram(stack: FrameStack, roi, mode: str) -> PeakHistogram:
    roi = _resolve_roi(stack, roi)
    if stack.M < 1:
        raise ValueError("empty stack")
    indptr, _, cols, rows = frames_csr(stack, roi)
    same, cross = kernels.pair_histograms(indptr, cols, rows, roi.w, roi.h, mode)
    raw = same / stack.M
    # a single frame has no neighbour to estimate accidentals from
    bg = cross / (stack.M - 1) if stack.M > 1 else np.zeros_like(raw)
    if mode == "sum":
        ox, oy = np.arange(2 * roi.w - 1), np.arange(2 * roi.h - 1)
    else:
        ox, oy = np.arange(-(roi.w - 1), roi.w), np.arange(-(roi.h - 1), roi.h)
    return PeakHistogram(mode, raw - bg, ox, oy, raw, bg)


def autoconvolve_frames(stack: FrameStack, roi=None) -> PeakHistogram:
    """Histogram of pixel-index sums of photon pairs within frames, minus adjacent-frame pairs.

    Anti-correlated photons (far field) give a peak at twice the beam centre.
    Ordered pairs are counted, so every unordered pair adds 2 to its bin.
    """
    return _peak_histogram(stack, roi, "sum")


def autocorrelate_frames(stack: FrameStack, roi=None) -> PeakHistogram:
    """Histogram of pixel-index differences of photon pairs within frames, minus adjacent-frame pairs.

    Position-correlated photons (image plane) give a peak at zero offset.
    """
    return _peak_histogram(stack, roi, "diff")


#: variance, in px^2, added to a pair coordinate by binning both photons
PAIR_BINNING_VAR = 2.0 / 12.0


def debinned_std(std_px: float, binning: bool = True) -> float:
    """Peak std in pixels with the pixelisation variance of both photons removed."""
    var = std_px ** 2 - (PAIR_BINNING_VAR if binning else 0.0)
    if var <= 0:
        raise ValueError(f"peak width {std_px:.3g} px is below the pixel resolution")
    return math.sqrt(var)


def sigma_minus_from_correlation_peak(std_px: float, pitch: float, magnification: float = 1.0,
                                      binning: bool = True) -> float:
    """sigma_- from the image-plane correlation peak width (pixels).

    ``magnification`` is image size over object size, so the object-plane
    pitch is ``pitch / |magnification|``.
    """
    return debinned_std(std_px, binning) * pitch / abs(magnification)


def sigma_plus_from_far_field_peak(std_px: float, pitch: float, focal_length: float,
                                   wavelength: float, binning: bool = True) -> float:
    """sigma_+ from the width of the focal-plane sum-coordinate peak.

    In the focal plane of a lens of focal length ``f`` the pair sum
    ``x1 + x2`` has std ``lambda f / (2 pi sigma_+)``.
    """
    s = debinned_std(std_px, binning) * pitch
    return wavelength * focal_length / (2.0 * math.pi * s)


# --------------------------------------------------------------------------- Fedorov ratio

def _conditional_std(col: np.ndarray, x: np.ndarray) -> float:
    w = col.sum()
    mu = np.dot(x, col) / w
    return math.sqrt(max(np.dot((x - mu) ** 2, col) / w, 0.0))


def fedorov_from_jpd(jpd: JPD2, clip: bool = False, mode: str = "central") -> float:
    """Marginal-to-conditional width ratio of a two-photon density.

    Parameters
    ----------
    jpd : JPD2
    clip : bool
        Zero negative cells first.  Without it a density with negative cells
        is rejected.
    mode : {"central", "peak"}
        ``"central"`` averages the conditional variance of x1 over the x2
        bins holding the central 50 % of the marginal mass, weighted by that
        mass; ``"peak"`` uses only the x2 bin of largest marginal mass.

    Returns
    -------
    float
        ``std(x1) / std(x1 | x2)``.
    """
    if jpd.n_negative and not clip:
        raise ValueError(f"density has {jpd.n_negative} negative cells; pass clip=True")
    vals = np.clip(jpd.values, 0.0, None) if clip else jpd.values
    total = vals.sum()
    if not total > 0:
        raise ValueError("density has no mass")
    x1 = jpd.grid.x1
    marg1 = vals.sum(axis=1)
    sig_marg = _conditional_std(marg1, x1)
    marg2 = vals.sum(axis=0)
    if mode == "peak":
        sel = np.array([int(np.argmax(marg2))])
    elif mode == "central":
        cdf = np.cumsum(marg2) / total
        lo = np.searchsorted(cdf, 0.25, side="left")
        hi = np.searchsorted(cdf, 0.75, side="left")
        sel = np.arange(lo, hi + 1)
    else:
        raise ValueError(f"mode must be 'central' or 'peak', got {mode!r}")
    sel = sel[marg2[sel] > 0]
    if sel.size == 0:
        raise ValueError("no populated conditional slices")
    var = np.array([_conditional_std(vals[:, j], x1) ** 2 for j in sel])
    w = marg2[sel]
    sig_cond = math.sqrt(np.dot(var, w) / w.sum())
    if not sig_cond > 0 or not sig_marg > 0:
        raise ValueError("degenerate density: zero width")
    return sig_marg / sig_cond
