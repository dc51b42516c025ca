# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the functions in ``_kernels_py``.

The grid kernel fuses the Fourier sums, the closed chain and the spectrum so
that no per-node Python work remains. 2x2 spectra use the quadratic formula;
larger ones call LAPACK ``zgeev`` directly.
"""

import numpy as np
from libc.math cimport cos, sin, sqrt
from scipy.linalg.cython_lapack cimport zgeev


cdef inline void _accumulate(const double[:, ::1] k, const double[:, ::1] wr, const double[:, ::1] wi,
                             double x0, double x1, double x2, double x3,
                             double* P, Py_ssize_t dd) noexcept nogil:
    # P holds [U, V, X, Y] blocks: U = sum c wr, V = sum s wi, X = sum c wi, Y = sum s wr
    cdef Py_ssize_t a, e
    cdef double th, c, s
    for e in range(4 * dd):
        P[e] = 0.0
    for a in range(k.shape[0]):
        th = k[a, 0] * x0 - k[a, 1] * x1 - k[a, 2] * x2 - k[a, 3] * x3
        c = cos(th)
        s = sin(th)
        for e in range(dd):
            P[e] += c * wr[a, e]
            P[dd + e] += s * wi[a, e]
            P[2 * dd + e] += c * wi[a, e]
            P[3 * dd + e] += s * wr[a, e]


cdef inline void _chain(double* P, Py_ssize_t d, double complex* out) noexcept nogil:
    cdef Py_ssize_t dd = d * d, i, j, l
    cdef double complex acc, p, q
    for i in range(d):
        for j in range(d):
            acc = 0
            for l in range(d):
                p = (P[i * d + l] - P[dd + i * d + l]) + 1j * (P[2 * dd + i * d + l] + P[3 * dd + i * d + l])
                q = (P[l * d + j] + P[dd + l * d + j]) + 1j * (P[2 * dd + l * d + j] - P[3 * dd + l * d + j])
                acc = acc + p * q
            out[i * d + j] = acc


def closed_chains(points, weights, nodes):
    cdef const double[:, ::1] k = np.ascontiguousarray(points, dtype=np.float64)
    W = np.ascontiguousarray(weights, dtype=np.complex128)
    cdef Py_ssize_t G = len(nodes), N = k.shape[0], d = W.shape[2], dd = d * d
    cdef const double[:, ::1] wr = np.ascontiguousarray(W.real.reshape(N, dd))
    cdef const double[:, ::1] wi = np.ascontiguousarray(W.imag.reshape(N, dd))
    cdef const double[:, ::1] x = np.ascontiguousarray(nodes, dtype=np.float64).reshape(G, 4)
    out = np.zeros((G, d, d), dtype=np.complex128)
    cdef double complex[:, :, ::1] A = out
    cdef double[::1] P = np.zeros(4 * dd)
    cdef Py_ssize_t g
    with nogil:
        for g in range(G):
            _accumulate(k, wr, wi, x[g, 0], x[g, 1], x[g, 2], x[g, 3], &P[0], dd)
            _chain(&P[0], d, &A[g, 0, 0])
    return out


cdef inline double _abs2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double complex _csqrt(double complex z) noexcept nogil:
    # principal square root
    cdef double r = sqrt(_abs2(z)), re, im
    re = sqrt(0.5 * (r + z.real))
    im = sqrt(0.5 * (r - z.real))
    if z.imag < 0:
        im = -im
    return re + 1j * im


cdef inline void _eig2(double complex* a, double complex* lam) noexcept nogil:
    cdef double complex h = 0.5 * (a[0] + a[3])
    cdef double complex det = a[0] * a[3] - a[1] * a[2]
    cdef double complex r = _csqrt(h * h - det)
    cdef double complex q
    # pick the larger root and recover the other from the determinant
    if _abs2(h + r) >= _abs2(h - r):
        q = h + r
    else:
        q = h - r
    lam[0] = q
    if q.real == 0 and q.imag == 0:
        lam[1] = 0
    else:
        lam[1] = det / q


def lagrangian_grid(points, weights, nodes):
    """Unclamped Lagrangian and ``|A|^2`` at each node.

    Returns ``(L, t, info)``; ``info[g] != 0`` flags an eigensolver failure.
    """
    cdef const double[:, ::1] k = np.ascontiguousarray(points, dtype=np.float64)
    W = np.ascontiguousarray(weights, dtype=np.complex128)
    cdef Py_ssize_t G = len(nodes), N = k.shape[0], d = W.shape[2], dd = d * d
    cdef const double[:, ::1] wr = np.ascontiguousarray(W.real.reshape(N, dd))
    cdef const double[:, ::1] wi = np.ascontiguousarray(W.imag.reshape(N, dd))
    cdef const double[:, ::1] x = np.ascontiguousarray(nodes, dtype=np.float64).reshape(G, 4)
    L_arr = np.zeros(G)
    t_arr = np.zeros(G)
    info_arr = np.zeros(G, dtype=np.intc)
    cdef double[::1] L = L_arr, t = t_arr
    cdef int[::1] info = info_arr
    cdef double[::1] P = np.zeros(4 * dd)
    cdef double complex[::1] A = np.zeros(dd, dtype=np.complex128)
    cdef double complex[::1] lam = np.zeros(d, dtype=np.complex128)
    cdef int n = <int>d, one = 1, lwork = <int>(4 * d), err = 0
    cdef double complex[::1] work = np.zeros(lwork, dtype=np.complex128)
    cdef double[::1] rwork = np.zeros(2 * d)
    cdef double complex dummy = 0
    cdef char jobv = b'N'
    cdef Py_ssize_t g, i
    cdef double s1, s2, m
    with nogil:
        for g in range(G):
            _accumulate(k, wr, wi, x[g, 0], x[g, 1], x[g, 2], x[g, 3], &P[0], dd)
            _chain(&P[0], d, &A[0])
            if d == 2:
                _eig2(&A[0], &lam[0])
            else:
                zgeev(&jobv, &jobv, &n, &A[0], &n, &lam[0], &dummy, &one, &dummy, &one,
                      &work[0], &lwork, &rwork[0], &err)
                if err != 0:
                    info[g] = err
                    continue
            s1 = 0.0
            s2 = 0.0
            for i in range(d):
                m = _abs2(lam[i])
                s2 += m
                s1 += sqrt(m)
            L[g] = s2 - s1 * s1 / d
            t[g] = s1 * s1
    return L_arr, t_arr, info_arr


def pairwise_sum(values):
    cdef const double[::1] v = np.ascontiguousarray(np.asarray(values, dtype=np.float64).ravel())
    cdef Py_ssize_t n = v.shape[0], size = 1, i
    if n == 0:
        return 0.0
    while size < n:
        size <<= 1
    buf_arr = np.zeros(size)
    cdef double[::1] buf = buf_arr
    for i in range(n):
        buf[i] = v[i]
    while size > 1:
        size >>= 1
        for i in range(size):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
    return buf[0]
