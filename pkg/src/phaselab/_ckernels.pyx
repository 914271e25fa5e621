# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair kernels; same contracts as ``phaselab._pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32


def coincidence_counts(indptr, indices, Py_ssize_t n_pixels):
    cdef const i64[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i32[::1] idx = np.ascontiguousarray(indices, dtype=np.int32)
    same_arr = np.zeros((n_pixels, n_pixels), dtype=np.int32)
    shifted_arr = np.zeros((n_pixels, n_pixels), dtype=np.int32)
    cdef i32[:, ::1] same = same_arr
    cdef i32[:, ::1] shifted = shifted_arr
    cdef Py_ssize_t m = ptr.shape[0] - 1
    cdef Py_ssize_t k, a, b
    cdef i32 i
    with nogil:
        for k in range(m):
            for a in range(ptr[k], ptr[k + 1]):
                i = idx[a]
                for b in range(ptr[k], ptr[k + 1]):
                    same[i, idx[b]] += 1
                if k + 1 < m:
                    for b in range(ptr[k + 1], ptr[k + 2]):
                        shifted[i, idx[b]] += 1
    return same_arr, shifted_arr


def pair_histograms(indptr, xs, ys, Py_ssize_t width, Py_ssize_t height, mode):
    if mode not in ("sum", "diff"):
        raise ValueError(f"mode must be 'sum' or 'diff', got {mode!r}")
    cdef const i64[::1] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] px = np.ascontiguousarray(xs, dtype=np.int64)
    cdef const i64[::1] py = np.ascontiguousarray(ys, dtype=np.int64)
    cdef Py_ssize_t nx = 2 * width - 1
    cdef Py_ssize_t ny = 2 * height - 1
    same_arr = np.zeros((ny, nx), dtype=np.int64)
    cross_arr = np.zeros((ny, nx), dtype=np.int64)
    cdef i64[:, ::1] same = same_arr
    cdef i64[:, ::1] cross = cross_arr
    cdef Py_ssize_t m = ptr.shape[0] - 1
    cdef Py_ssize_t k, a, b
    cdef bint summed = mode == "sum"
    cdef Py_ssize_t ox = 0 if summed else width - 1
    cdef Py_ssize_t oy = 0 if summed else height - 1
    cdef Py_ssize_t sgn = 1 if summed else -1
    with nogil:
        for k in range(m):
            for a in range(ptr[k], ptr[k + 1]):
                for b in range(ptr[k], ptr[k + 1]):
                    if a != b:
                        same[py[a] + sgn * py[b] + oy, px[a] + sgn * px[b] + ox] += 1
                if k + 1 < m:
                    for b in range(ptr[k + 1], ptr[k + 2]):
                        cross[py[a] + sgn * py[b] + oy, px[a] + sgn * px[b] + ox] += 1
    return same_arr, cross_arr
