# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``.

Both loops are phase-accumulation sums over the array elements; doing them in
C avoids the (N, cells) complex temporaries numpy needs.
"""
import numpy as np
from libc.math cimport sin, cos


def fresnel_matrix(offsets, phi, zeta, double wavenumber):
    cdef double[::1] x = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[::1] ze = np.ascontiguousarray(zeta, dtype=np.float64)
    cdef Py_ssize_t n_el = x.shape[0]
    cdef Py_ssize_t n_pts = ph.shape[0]
    if ze.shape[0] != n_pts:
        raise ValueError("phi and zeta must have the same length")
    out = np.empty((n_el, n_pts), dtype=np.complex128)
    cdef double[:, :, ::1] v = out.view(np.float64).reshape(n_el, n_pts, 2)
    cdef Py_ssize_t i, q
    cdef double xi, xx, a
    with nogil:
        for i in range(n_el):
            xi = x[i]
            xx = xi * xi
            for q in range(n_pts):
                a = wavenumber * (xi * ph[q] - xx * ze[q])
                v[i, q, 0] = cos(a)
                v[i, q, 1] = sin(a)
    return out


def gain_cells(u, offsets, phi, zeta, double wavenumber):
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.complex128).view(
        np.float64).reshape(-1, 2)
    cdef double[::1] x = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef double[::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[::1] ze = np.ascontiguousarray(zeta, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0]
    cdef Py_ssize_t n_cells = ph.shape[0]
    if x.shape[0] != n:
        raise ValueError("u and offsets must have the same length")
    if ze.shape[0] != n_cells:
        raise ValueError("phi and zeta must have the same length")
    out = np.empty(n_cells, dtype=np.float64)
    cdef double[::1] g = out
    cdef Py_ssize_t c, i
    cdef double re, im, a, ca, sa, norm = <double>n * <double>n
    with nogil:
        for c in range(n_cells):
            re = 0.0
            im = 0.0
            for i in range(n):
                a = wavenumber * (x[i] * ph[c] - x[i] * x[i] * ze[c])
                ca = cos(a)
                sa = sin(a)
                # conj(exp(1j*a)) * u_i
                re = re + ca * uv[i, 0] + sa * uv[i, 1]
                im = im + ca * uv[i, 1] - sa * uv[i, 0]
            g[c] = (re * re + im * im) / norm
    return out
