"""Monte-Carlo photon-counting frames from a biphoton density.

Frames are born binary: a pixel reads 1 if at least one photon (pair photon,
background single or bloom spill) lands on it.  Random streams are derived
per block of frames from ``(seed, block index)``, so a stack does not depend
on how many workers render it.
"""
from __future__ import annotations

import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .biphoton import DGSource, widths_at
from .fields import JPD2
from .optics import LensFoldMap

#: frames per independent random stream
BLOCK_FRAMES = 1024
#: per-pixel mean occupancy above which the pair estimator degrades
MAX_OCCUPANCY = 0.1


class OccupancyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CameraModel:
    """Sensor geometry, detection and noise parameters.

    ``mu`` is the mean number of photon pairs per frame over the whole
    sensor.  Blooming spills along ``bloom_axis`` (``"x"``: along a row,
    ``"y"``: along a column).  Background singles are uniform over a square of
    half-width ``bg_extent`` metres centred on the optical axis; ``None``
    means three times the source's one-photon width.
    """

    width: int = 64
    height: int = 64
    pitch: float = 16e-6
    eta: float = 0.6
    mu: float = 5.0
    bloom_prob: float = 0.0
    bloom_sigma: float = 1.9
    bg_rate: float = 0.0
    seed: int = 0
    bloom_axis: str = "x"
    bg_extent: float | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"sensor must have positive size, got {self.width}x{self.height}")
        if not self.pitch > 0:
            raise ValueError(f"pixel pitch must be positive, got {self.pitch}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"quantum efficiency must lie in (0, 1], got {self.eta}")
        if self.mu < 0 or self.bg_rate < 0:
            raise ValueError("pair and background rates must be non-negative")
        if not 0 <= self.bloom_prob < 1:
            raise ValueError(f"bloom probability must lie in [0, 1), got {self.bloom_prob}")
        if self.bloom_prob > 0 and not self.bloom_sigma > 0:
            raise ValueError("bloom_sigma must be positive when blooming is enabled")
        if self.bloom_axis not in ("x", "y"):
            raise ValueError(f"bloom_axis must be 'x' or 'y', got {self.bloom_axis!r}")

    def pixel_of(self, x, y):
        """Column and row of metric positions; the optical axis hits the sensor centre."""
        col = np.floor(np.asarray(x) / self.pitch + self.width / 2).astype(np.int64)
        row = np.floor(np.asarray(y) / self.pitch + self.height / 2).astype(np.int64)
        return col, row

    def pixel_center_x(self, col) -> np.ndarray:
        return (np.asarray(col) - self.width / 2 + 0.5) * self.pitch

    def pixel_center_y(self, row) -> np.ndarray:
        return (np.asarray(row) - self.height / 2 + 0.5) * self.pitch


@dataclass(eq=False)
class FrameStack:
    """``M x height x width`` binary frames plus the pixel pitch."""

    frames: np.ndarray
    pitch: float
    camera: CameraModel | None = None

    def __post_init__(self):
        fr = np.asarray(self.frames)
        if fr.ndim != 3:
            raise ValueError(f"frames must be a 3-D array, got shape {fr.shape}")
        if fr.dtype != np.uint8:
            if fr.size and (fr.min() < 0 or fr.max() > 1):
                raise ValueError("frames must be binary")
            fr = fr.astype(np.uint8)
        elif fr.size and fr.max() > 1:
            raise ValueError("frames must be binary")
        fr.setflags(write=False)
        self.frames = fr

    @property
    def M(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def geometry(self) -> CameraModel:
        """Camera model carrying at least this stack's size and pitch."""
        if self.camera is not None:
            return self.camera
        return CameraModel(width=self.width, height=self.height, pitch=self.pitch)

    def mean_occupancy(self) -> np.ndarray:
        return self.frames.mean(axis=0, dtype=np.float64)

    def __eq__(self, other):
        if not isinstance(other, FrameStack):
            return NotImplemented
        return (self.pitch == other.pitch and self.frames.shape == other.frames.shape
                and bool(np.array_equal(self.frames, other.frames)))


# --------------------------------------------------------------------------- sources


class DGPairs:
    """Photon pairs from a DG density with sum/difference widths given
    directly in detector coordinates."""

    def __init__(self, sigma_plus: float, sigma_minus: float):
        if not (sigma_plus > 0 and sigma_minus > 0):
            raise ValueError("DG widths must be positive")
        self.sigma_plus = float(sigma_plus)
        self.sigma_minus = float(sigma_minus)

    @classmethod
    def at(cls, src: DGSource, z: float, scale: float = 1.0) -> "DGPairs":
        """Pairs at distance ``z``, coordinates multiplied by ``scale``."""
        w = widths_at(src, z)
        return cls(abs(scale) * w.sigma_plus_z, abs(scale) * w.sigma_minus_z)

    @classmethod
    def folded(cls, src: DGSource, fold: LensFoldMap) -> "DGPairs":
        """Pairs detected at ``fold.zbar`` behind a single lens."""
        return cls.at(src, fold.z, 1.0 / fold.s)

    @classmethod
    def far_field(cls, src: DGSource, f: float) -> "DGPairs":
        """Pairs in the back focal plane of a lens of focal length ``f``."""
        scale = src.wavelength * f / (2.0 * math.pi)
        return cls(scale / src.sigma_plus, scale / src.sigma_minus)

    @property
    def envelope_std(self) -> float:
        return 0.5 * math.hypot(self.sigma_plus, self.sigma_minus)

    def sample(self, rng: np.random.Generator, n: int):
        u = rng.normal(0.0, self.sigma_minus, n)
        v = rng.normal(0.0, self.sigma_plus, n)
        return 0.5 * (v + u), 0.5 * (v - u)


class UncorrelatedPairs:
    """Two independent photons from a Gaussian beam of standard deviation ``sigma``."""

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ValueError("beam width must be positive")
        self.sigma = float(sigma)

    @property
    def envelope_std(self) -> float:
        return self.sigma

    def sample(self, rng: np.random.Generator, n: int):
        return rng.normal(0.0, self.sigma, n), rng.normal(0.0, self.sigma, n)


class GridPairs:
    """Pairs drawn from an arbitrary :class:`JPD2` by CDF inversion over its
    cells, uniformly jittered within the chosen cell."""

    def __init__(self, jpd: JPD2):
        p = np.asarray(jpd.values, dtype=float)
        if np.any(p < 0):
            raise ValueError("cannot sample a density with negative cells; clip it first")
        total = p.sum()
        if not total > 0:
            raise ValueError("cannot sample an empty density")
        self.grid = jpd.grid
        self._cdf = np.cumsum(p.ravel()) / total
        self._cdf[-1] = 1.0
        x1 = self.grid.x1
        m1 = p.sum(axis=1) / total
        mean = np.sum(x1 * m1)
        self._std = float(np.sqrt(np.sum((x1 - mean) ** 2 * m1)))

    @property
    def envelope_std(self) -> float:
        return self._std

    def sample(self, rng: np.random.Generator, n: int):
        g = self.grid
        cell = np.searchsorted(self._cdf, rng.random(n), side="right")
        cell = np.minimum(cell, self._cdf.size - 1)
        i, j = np.divmod(cell, g.n2)
        x1 = g.x1_0 + (i + rng.random(n) - 0.5) * g.dx1
        x2 = g.x2_0 + (j + rng.random(n) - 0.5) * g.dx2
        return x1, x2


def sample_pairs_dg(src: DGSource, z: float, n: int, seed=None) -> np.ndarray:
    """``n`` exact draws ``(x1, x2)`` from the DG density at ``z``, shape ``(n, 2)``."""
    if n < 1:
        raise ValueError(f"need at least one pair, got n={n}")
    x1, x2 = DGPairs.at(src, z).sample(np.random.default_rng(seed), n)
    return np.column_stack([x1, x2])


def sample_pairs_grid(jpd: JPD2, n: int, seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError(f"need at least one pair, got n={n}")
    x1, x2 = GridPairs(jpd).sample(np.random.default_rng(seed), n)
    return np.column_stack([x1, x2])


# --------------------------------------------------------------------------- rendering


def _block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block, stream)))


def apply_blooming(frame: np.ndarray, bloom_prob: float, bloom_sigma: float, seed=None,
                   axis: str = "x") -> np.ndarray:
    """Spill lit pixels onto neighbours along ``axis``.

    Each lit pixel, with probability ``bloom_prob``, lights one more pixel at
    offset ``round(Normal(0, bloom_sigma))``; zero offsets are redrawn.
    Works on a single frame or a stack (last two axes are rows, columns).
    """
    frame = np.asarray(frame)
    if bloom_prob == 0:
        return frame.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = frame.astype(np.uint8, copy=True)
    lit = np.nonzero(frame)
    n = lit[0].size
    spill = rng.random(n) < bloom_prob
    src_idx = [a[spill] for a in lit]
    m = src_idx[0].size
    offs = np.rint(rng.normal(0.0, bloom_sigma, m)).astype(np.int64)
    zero = offs == 0
    while np.any(zero):
        offs[zero] = np.rint(rng.normal(0.0, bloom_sigma, int(zero.sum()))).astype(np.int64)
        zero = offs == 0
    dim = frame.ndim - 1 if axis == "x" else frame.ndim - 2
    tgt = list(src_idx)
    tgt[dim] = tgt[dim] + offs
    ok = (tgt[dim] >= 0) & (tgt[dim] < frame.shape[dim])
    out[tuple(a[ok] for a in tgt)] = 1
    return out


def _render_block(pair_source, camera: CameraModel, block: int, n_frames: int) -> np.ndarray:
    rng = _block_rng(camera.seed, block)
    out = np.zeros((n_frames, camera.height, camera.width), dtype=np.uint8)
    n_pairs = rng.poisson(camera.mu, n_frames)
    total = int(n_pairs.sum())
    frame_of_pair = np.repeat(np.arange(n_frames), n_pairs)
    x1, x2 = pair_source.sample(rng, total)
    y1, y2 = pair_source.sample(rng, total)
    keep1 = rng.random(total) < camera.eta
    keep2 = rng.random(total) < camera.eta
    f = np.concatenate([frame_of_pair[keep1], frame_of_pair[keep2]])
    x = np.concatenate([x1[keep1], x2[keep2]])
    y = np.concatenate([y1[keep1], y2[keep2]])
    if camera.bg_rate > 0:
        n_bg = rng.poisson(camera.bg_rate, n_frames)
        nb = int(n_bg.sum())
        half = camera.bg_extent if camera.bg_extent is not None else 3.0 * pair_source.envelope_std
        f = np.concatenate([f, np.repeat(np.arange(n_frames), n_bg)])
        x = np.concatenate([x, rng.uniform(-half, half, nb)])
        y = np.concatenate([y, rng.uniform(-half, half, nb)])
    col, row = camera.pixel_of(x, y)
    on = (col >= 0) & (col < camera.width) & (row >= 0) & (row < camera.height)
    out[f[on], row[on], col[on]] = 1
    if camera.bloom_prob > 0:
        out = apply_blooming(out, camera.bloom_prob, camera.bloom_sigma,
                             _block_rng(camera.seed, block, 1), axis=camera.bloom_axis)
    return out


def render_frames(pair_source, camera: CameraModel, M: int, workers: int = 1) -> FrameStack:
    """Render ``M`` frames of ``pair_source`` seen by ``camera``.

    ``pair_source`` is any object with ``sample(rng, n) -> (x1, x2)`` and an
    ``envelope_std`` attribute (:class:`DGPairs`, :class:`GridPairs`,
    :class:`UncorrelatedPairs`).  Output is identical for any ``workers``.
    """
    if M < 2:
        raise ValueError(f"need at least 2 frames, got M={M}")
    frames = np.empty((M, camera.height, camera.width), dtype=np.uint8)
    blocks = [(b, b * BLOCK_FRAMES, min(M, (b + 1) * BLOCK_FRAMES))
              for b in range(math.ceil(M / BLOCK_FRAMES))]

    def run(item):
        b, lo, hi = item
        frames[lo:hi] = _render_block(pair_source, camera, b, hi - lo)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))
    else:
        for item in blocks:
            run(item)
    stack = FrameStack(frames, camera.pitch, camera)
    peak = float(stack.mean_occupancy().max())
    if peak > MAX_OCCUPANCY:
        warnings.warn(f"peak per-pixel occupancy {peak:.3f} exceeds {MAX_OCCUPANCY}; "
                      "the pair estimator assumes sparse frames", OccupancyWarning, stacklevel=2)
    return stack


def pairs_for_occupancy(pair_source, camera: CameraModel, occupancy: float = 0.05) -> float:
    """Pair rate ``mu`` giving roughly ``occupancy`` at the brightest pixel."""
    s = pair_source.envelope_std
    peak_per_photon = min(1.0, camera.pitch ** 2 / (2.0 * math.pi * s * s))
    return occupancy / (2.0 * camera.eta * peak_per_photon)


# --------------------------------------------------------------------------- BPF1 files

_MAGIC = b"BPF1"
_HEADER = struct.Struct("<4sIIId")


class FrameFormatError(ValueError):
    pass


def write_stack(stack: FrameStack, path) -> None:
    """Write ``stack`` in the BPF1 layout: magic, u32 width/height/M, f64 pitch, raw bytes."""
    if stack.M == 0:
        raise ValueError("refusing to write an empty frame stack")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, stack.width, stack.height, stack.M, float(stack.pitch)))
        fh.write(np.ascontiguousarray(stack.frames, dtype=np.uint8).tobytes())


def read_stack(path) -> FrameStack:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FrameFormatError(f"{path}: truncated header at byte {len(raw)} (need {_HEADER.size})")
    magic, width, height, m, pitch = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FrameFormatError(f"{path}: bad magic {magic!r} at byte 0")
    need = width * height * m
    have = len(raw) - _HEADER.size
    if have != need:
        raise FrameFormatError(
            f"{path}: payload is {have} bytes from byte {_HEADER.size}, header "
            f"({width}x{height}x{m}) implies {need}; mismatch at byte {_HEADER.size + min(have, need)}")
    if m == 0:
        raise FrameFormatError(f"{path}: stack has no frames")
    frames = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).reshape(m, height, width)
    if frames.max() > 1:
        bad = int(np.argmax(frames.ravel() > 1))
        raise FrameFormatError(f"{path}: non-binary pixel at byte {_HEADER.size + bad}")
    return FrameStack(frames.copy(), pitch)
