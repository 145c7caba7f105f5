# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter PRNG block fill, trilinear resampling,
sequential mean pooling.

Each function has a pure-numpy twin in `_pure` with an identical
floating-point expression tree; results must match bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t raptor_mix64(uint64_t z) {
        z ^= z >> 30; z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27; z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }
    """
    cnp.uint64_t raptor_mix64(cnp.uint64_t z) nogil

DEF GOLDEN = 0x9E3779B97F4A7C15


def mix64_block(seed, start, n):
    """Outputs i = start .. start+n-1 of the splitmix64 counter stream."""
    cdef cnp.uint64_t s = <cnp.uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.uint64_t c0 = <cnp.uint64_t> (int(start) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t count = n
    out_arr = np.empty(count, dtype=np.uint64)
    cdef cnp.uint64_t[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            out[i] = raptor_mix64(s + (c0 + <cnp.uint64_t> i + 1) * <cnp.uint64_t> GOLDEN)
    return out_arr


def resample_trilinear(src, Py_ssize_t target):
    """Trilinear align-corners resampling of a cubic f32 volume."""
    cdef const float[:, :, ::1] v = np.ascontiguousarray(src, dtype=np.float32)
    cdef Py_ssize_t s = v.shape[0]
    out_arr = np.empty((target, target, target), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr

    idx_arr = np.empty((2, target), dtype=np.intp)
    frac_arr = np.empty(target, dtype=np.float64)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef double[::1] frac = frac_arr

    cdef double scale = 0.0
    if target > 1 and s > 1:
        scale = (<double> (s - 1)) / (<double> (target - 1))

    cdef Py_ssize_t i, j, k, lo
    cdef double pos, fl
    for i in range(target):
        pos = (<double> i) * scale
        fl = floor(pos)
        lo = <Py_ssize_t> fl
        if lo > s - 2:
            lo = s - 2
        if lo < 0:
            lo = 0
        idx[0, i] = lo
        idx[1, i] = lo + 1 if lo + 1 < s else s - 1
        frac[i] = pos - <double> lo

    cdef Py_ssize_t x0, x1, y0, y1, z0, z1
    cdef double fx, fy, fz, c00, c01, c10, c11, c0, c1
    with nogil:
        for i in range(target):
            x0 = idx[0, i]; x1 = idx[1, i]; fx = frac[i]
            for j in range(target):
                y0 = idx[0, j]; y1 = idx[1, j]; fy = frac[j]
                for k in range(target):
                    z0 = idx[0, k]; z1 = idx[1, k]; fz = frac[k]
                    c00 = (<double> v[x0, y0, z0]) * (1.0 - fz) + (<double> v[x0, y0, z1]) * fz
                    c01 = (<double> v[x0, y1, z0]) * (1.0 - fz) + (<double> v[x0, y1, z1]) * fz
                    c10 = (<double> v[x1, y0, z0]) * (1.0 - fz) + (<double> v[x1, y0, z1]) * fz
                    c11 = (<double> v[x1, y1, z0]) * (1.0 - fz) + (<double> v[x1, y1, z1]) * fz
                    c0 = c00 * (1.0 - fy) + c01 * fy
                    c1 = c10 * (1.0 - fy) + c11 * fy
                    out[i, j, k] = <float> (c0 * (1.0 - fx) + c1 * fx)
    return out_arr


def mean_pool_seq(tokens):
    """Mean over the leading axis, accumulated in f64 in ascending order."""
    cdef const float[:, :, ::1] t = np.ascontiguousarray(tokens, dtype=np.float32)
    cdef Py_ssize_t d0 = t.shape[0], d1 = t.shape[1], d2 = t.shape[2]
    acc_arr = np.zeros((d1, d2), dtype=np.float64)
    out_arr = np.empty((d1, d2), dtype=np.float32)
    cdef double[:, ::1] acc = acc_arr
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    with nogil:
        for i in range(d0):
            for j in range(d1):
                for k in range(d2):
                    acc[j, k] = acc[j, k] + <double> t[i, j, k]
        for j in range(d1):
            for k in range(d2):
                out[j, k] = <float> (acc[j, k] / <double> d0)
    return out_arr
