# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled serial-chain kernels. Same contract as ``_chain_py``."""
import numpy as np
from libc.math cimport cos, sin


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void _matmul4(const double* A, const double* B, double* out) noexcept nogil:
    cdef int r, c, k
    cdef double acc
    for r in range(4):
        for c in range(4):
            acc = 0.0
            for k in range(4):
                acc = acc + A[4 * r + k] * B[4 * k + c]
            out[4 * r + c] = acc


cdef void _forward(const double[:, :, ::1] origins, const double[:, ::1] axes,
                   const double[:, ::1] base, const double[:, ::1] end,
                   const double[::1] q, double* T, double[:, ::1] pos,
                   double[:, ::1] zax) noexcept nogil:
    cdef int n = axes.shape[0]
    cdef int i, r, c
    cdef double tmp[16]
    cdef double R[16]
    cdef double x, y, z, co, si, t
    for r in range(4):
        for c in range(4):
            T[4 * r + c] = base[r, c]
    for i in range(n):
        _matmul4(T, &origins[i, 0, 0], tmp)
        for r in range(16):
            T[r] = tmp[r]
        x = axes[i, 0]
        y = axes[i, 1]
        z = axes[i, 2]
        for r in range(3):
            pos[i, r] = T[4 * r + 3]
            zax[i, r] = T[4 * r] * x + T[4 * r + 1] * y + T[4 * r + 2] * z
        co = cos(q[i])
        si = sin(q[i])
        t = 1.0 - co
        R[0] = co + x * x * t
        R[1] = x * y * t - z * si
        R[2] = x * z * t + y * si
        R[3] = 0.0
        R[4] = y * x * t + z * si
        R[5] = co + y * y * t
        R[6] = y * z * t - x * si
        R[7] = 0.0
        R[8] = z * x * t - y * si
        R[9] = z * y * t + x * si
        R[10] = co + z * z * t
        R[11] = 0.0
        R[12] = 0.0
        R[13] = 0.0
        R[14] = 0.0
        R[15] = 1.0
        _matmul4(T, R, tmp)
        for r in range(16):
            T[r] = tmp[r]
    _matmul4(T, &end[0, 0], tmp)
    for r in range(16):
        T[r] = tmp[r]


def chain_frames(origins, axes, base, end, q):
    cdef int n = axes.shape[0]
    Tn = np.empty((4, 4))
    pos = np.empty((n, 3))
    zax = np.empty((n, 3))
    cdef double[:, ::1] Tv = Tn
    _forward(np.ascontiguousarray(origins, dtype=np.float64),
             np.ascontiguousarray(axes, dtype=np.float64),
             np.ascontiguousarray(base, dtype=np.float64),
             np.ascontiguousarray(end, dtype=np.float64),
             np.ascontiguousarray(q, dtype=np.float64),
             &Tv[0, 0], pos, zax)
    return Tn, pos, zax


cdef void _jacobian(double* T, double[:, ::1] pos, double[:, ::1] zax,
                    double[:, ::1] J) noexcept nogil:
    cdef int n = pos.shape[0]
    cdef int i
    cdef double d[3]
    cdef double v[3]
    for i in range(n):
        d[0] = T[3] - pos[i, 0]
        d[1] = T[7] - pos[i, 1]
        d[2] = T[11] - pos[i, 2]
        _cross(&zax[i, 0], d, v)
        J[0, i] = v[0]
        J[1, i] = v[1]
        J[2, i] = v[2]
        J[3, i] = zax[i, 0]
        J[4, i] = zax[i, 1]
        J[5, i] = zax[i, 2]


def chain_jacobian(origins, axes, base, end, q):
    cdef int n = axes.shape[0]
    Tn, pos, zax = chain_frames(origins, axes, base, end, q)
    J = np.empty((6, n))
    cdef double[:, ::1] Tv = Tn
    _jacobian(&Tv[0, 0], pos, zax, J)
    return Tn, J


def chain_jacobian_derivative(origins, axes, base, end, q):
    cdef int n = axes.shape[0]
    Tn, pos_a, zax_a = chain_frames(origins, axes, base, end, q)
    J_a = np.empty((6, n))
    dJ_a = np.zeros((n, 6, n))
    cdef double[:, ::1] Tv = Tn
    cdef double[:, ::1] pos = pos_a
    cdef double[:, ::1] zax = zax_a
    cdef double[:, ::1] J = J_a
    cdef double[:, :, ::1] dJ = dJ_a
    cdef int i, k
    cdef double d[3]
    cdef double vk[3]
    cdef double ji[3]
    cdef double out[3]
    with nogil:
        _jacobian(&Tv[0, 0], pos, zax, J)
        for k in range(n):
            d[0] = Tv[0, 3] - pos[k, 0]
            d[1] = Tv[1, 3] - pos[k, 1]
            d[2] = Tv[2, 3] - pos[k, 2]
            _cross(&zax[k, 0], d, vk)
            for i in range(n):
                if k < i:
                    ji[0] = J[0, i]
                    ji[1] = J[1, i]
                    ji[2] = J[2, i]
                    _cross(&zax[k, 0], ji, out)
                    dJ[k, 0, i] = out[0]
                    dJ[k, 1, i] = out[1]
                    dJ[k, 2, i] = out[2]
                    _cross(&zax[k, 0], &zax[i, 0], out)
                    dJ[k, 3, i] = out[0]
                    dJ[k, 4, i] = out[1]
                    dJ[k, 5, i] = out[2]
                else:
                    _cross(&zax[i, 0], vk, out)
                    dJ[k, 0, i] = out[0]
                    dJ[k, 1, i] = out[1]
                    dJ[k, 2, i] = out[2]
    return Tn, J_a, dJ_a
