# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``_pykernels`` function for function."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    # half-sample symmetric extension: ... b a | a b c | c b ...
    cdef Py_ssize_t period = 2 * n
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - 1 - i
    return i


def blur_columns(const double[:, :] x, const double[::1] kernel):
    """Correlate every column of ``x`` with a symmetric odd ``kernel``."""
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    cdef Py_ssize_t r = (kernel.shape[0] - 1) // 2
    cdef Py_ssize_t i, j, k, src
    cdef double w
    padded_np = np.empty((n + 2 * r, m), dtype=np.float64)
    out_np = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] padded = padded_np
    cdef double[:, ::1] out = out_np
    with nogil:
        for i in range(n + 2 * r):
            src = _reflect(i - r, n)
            for j in range(m):
                padded[i, j] = x[src, j]
        for i in range(n):
            for k in range(2 * r + 1):
                w = kernel[k]
                for j in range(m):
                    out[i, j] += w * padded[i + k, j]
    return out_np


def pad_replicate_cm(const double[:, :, :, :] x, Py_ssize_t ph, Py_ssize_t pw):
    """Replicate-pad (N, C, H, W) and lay it out channel-major as (C, N*Hp*Wp)."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Hp = H + 2 * ph, Wp = W + 2 * pw
    cdef Py_ssize_t n, c, i, j, si, sj, base
    out_np = np.empty((C, N * Hp * Wp), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    with nogil:
        for c in range(C):
            for n in range(N):
                base = n * Hp * Wp
                for i in range(Hp):
                    si = i - ph
                    if si < 0:
                        si = 0
                    elif si >= H:
                        si = H - 1
                    for j in range(Wp):
                        sj = j - pw
                        if sj < 0:
                            sj = 0
                        elif sj >= W:
                            sj = W - 1
                        out[c, base + i * Wp + j] = x[n, c, si, sj]
    return out_np


def fold_replicate_cm(const double[:, :] g, Py_ssize_t N, Py_ssize_t H, Py_ssize_t W,
                      Py_ssize_t ph, Py_ssize_t pw):
    """Adjoint of ``pad_replicate_cm``: sum padded-layout gradients back to (N, C, H, W)."""
    cdef Py_ssize_t C = g.shape[0]
    cdef Py_ssize_t Hp = H + 2 * ph, Wp = W + 2 * pw
    cdef Py_ssize_t n, c, i, j, si, sj, base
    out_np = np.zeros((N, C, H, W), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_np
    with nogil:
        for n in range(N):
            for c in range(C):
                base = n * Hp * Wp
                for i in range(Hp):
                    si = i - ph
                    if si < 0:
                        si = 0
                    elif si >= H:
                        si = H - 1
                    for j in range(Wp):
                        sj = j - pw
                        if sj < 0:
                            sj = 0
                        elif sj >= W:
                            sj = W - 1
                        out[n, c, si, sj] += g[c, base + i * Wp + j]
    return out_np
