"""Pure-Python (numpy / scipy.sparse) implementations of the pair kernels.

Frames arrive in CSR form: the lit pixels of frame ``k`` are
``indices[indptr[k]:indptr[k + 1]]`` (flattened ROI index ``row * w + col``).
All counts are integers, so results are exact and order independent.
"""
import numpy as np
from scipy import sparse

#: frames per chunk when expanding pair lists
_CHUNK = 4096


def coincidence_counts(indptr, indices, n_pixels):
    """Same-frame and next-frame pixel coincidence counts.

    Returns ``(same, shifted)``, both ``int32[n_pixels, n_pixels]``:
    ``same[i, j] = sum_k c_i^k c_j^k`` and ``shifted[i, j] = sum_k c_i^k c_j^(k+1)``.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int32)
    m = indptr.size - 1
    data = np.ones(indices.size, dtype=np.int32)
    c = sparse.csr_matrix((data, indices, indptr), shape=(m, n_pixels))
    ct = c.T.tocsr()
    same = (ct @ c).toarray().astype(np.int32, copy=False)
    shifted = (ct[:, :-1] @ c[1:]).toarray().astype(np.int32, copy=False)
    return same, shifted


def _pairs_same(indptr, lo, hi):
    """Ordered pairs ``(a, b)``, ``a != b``, of photon slots sharing a frame in ``[lo, hi)``."""
    counts = np.diff(indptr[lo:hi + 1])
    start = indptr[lo:hi]
    k = np.repeat(counts, counts)
    a = np.arange(indptr[lo], indptr[hi])
    first = np.repeat(a, k)
    base = np.repeat(np.repeat(start, counts), k)
    offs = np.arange(first.size) - np.repeat(np.cumsum(k) - k, k)
    second = base + offs
    keep = first != second
    return first[keep], second[keep]


def _pairs_next(indptr, lo, hi):
    """Pairs ``(a, b)`` with ``a`` in frame ``f`` and ``b`` in frame ``f + 1``, ``f in [lo, hi)``."""
    counts = np.diff(indptr[lo:hi + 2])
    cur = counts[:-1]
    nxt = counts[1:]
    k = np.repeat(nxt, cur)
    a = np.arange(indptr[lo], indptr[hi])
    first = np.repeat(a, k)
    base = np.repeat(np.repeat(indptr[lo + 1:hi + 1], cur), k)
    offs = np.arange(first.size) - np.repeat(np.cumsum(k) - k, k)
    return first, base + offs


def pair_histograms(indptr, xs, ys, width, height, mode):
    """Histograms of pair coordinates within frames and across adjacent frames.

    ``mode="sum"`` bins ``(ya + yb, xa + xb)``; ``mode="diff"`` bins
    ``(ya - yb + height - 1, xa - xb + width - 1)``.  Same-frame pairs are
    ordered and exclude a photon paired with itself.  Returns
    ``(same, cross)`` as ``int64[2 height - 1, 2 width - 1]``.
    """
    if mode not in ("sum", "diff"):
        raise ValueError(f"mode must be 'sum' or 'diff', got {mode!r}")
    indptr = np.asarray(indptr, dtype=np.int64)
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    m = indptr.size - 1
    nx, ny = 2 * width - 1, 2 * height - 1
    same = np.zeros(nx * ny, dtype=np.int64)
    cross = np.zeros(nx * ny, dtype=np.int64)

    def flat(a, b):
        if mode == "sum":
            bx = xs[a] + xs[b]
            by = ys[a] + ys[b]
        else:
            bx = xs[a] - xs[b] + width - 1
            by = ys[a] - ys[b] + height - 1
        return by * nx + bx

    for lo in range(0, m, _CHUNK):
        hi = min(m, lo + _CHUNK)
        a, b = _pairs_same(indptr, lo, hi)
        same += np.bincount(flat(a, b), minlength=nx * ny)
        hn = min(hi, m - 1)
        if hn > lo:
            a, b = _pairs_next(indptr, lo, hn)
            cross += np.bincount(flat(a, b), minlength=nx * ny)
    return same.reshape(ny, nx), cross.reshape(ny, nx)
