# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fixed-step RK4 propagator for linear complex ODEs.

Integrates dy/dt = G(t) y with G(t) = G0 + sum_k c_k(t) G_k, where the real
coefficients c_k are supplied pre-sampled on the half-step grid.
"""
import numpy as np
cimport numpy as cnp

ctypedef double complex cplx


cdef inline void _assemble(const cplx[:, ::1] G0, const cplx[:, :, ::1] Gk,
                           const double[:, ::1] coeffs, Py_ssize_t j,
                           cplx[:, ::1] G) noexcept nogil:
    cdef Py_ssize_t n = G0.shape[0], K = Gk.shape[0]
    cdef Py_ssize_t a, b, k
    cdef double c
    for a in range(n):
        for b in range(n):
            G[a, b] = G0[a, b]
    for k in range(K):
        c = coeffs[k, j]
        if c == 0.0:
            continue
        for a in range(n):
            for b in range(n):
                G[a, b] = G[a, b] + c * Gk[k, a, b]


cdef inline void _matmul(const cplx[:, ::1] G, const cplx[:, ::1] y,
                         cplx[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = G.shape[0], m = y.shape[1]
    cdef Py_ssize_t a, b, c
    cdef cplx acc, g
    for a in range(n):
        for c in range(m):
            out[a, c] = 0
    for a in range(n):
        for b in range(n):
            g = G[a, b]
            if g == 0:
                continue
            for c in range(m):
                out[a, c] = out[a, c] + g * y[b, c]


def rk4_propagate(cplx[:, ::1] G0, cplx[:, :, ::1] Gk, double[:, ::1] coeffs,
                  cplx[:, ::1] y0, double dt, Py_ssize_t nsteps,
                  Py_ssize_t save_every):
    cdef Py_ssize_t n = G0.shape[0], m = y0.shape[1]
    cdef Py_ssize_t nsave = nsteps // save_every + 1
    cdef Py_ssize_t s, a, c, isave = 1
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    out_arr = np.empty((nsave, n, m), dtype=np.complex128)
    cdef cplx[:, :, ::1] out = out_arr
    cdef cplx[:, ::1] y = np.array(y0, dtype=np.complex128, copy=True)
    cdef cplx[:, ::1] tmp = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k1 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k2 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k3 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] k4 = np.empty((n, m), dtype=np.complex128)
    cdef cplx[:, ::1] Ga = np.empty((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] Gb = np.empty((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] Gc = np.empty((n, n), dtype=np.complex128)

    with nogil:
        for a in range(n):
            for c in range(m):
                out[0, a, c] = y[a, c]
        _assemble(G0, Gk, coeffs, 0, Ga)
        for s in range(nsteps):
            _assemble(G0, Gk, coeffs, 2 * s + 1, Gb)
            _assemble(G0, Gk, coeffs, 2 * s + 2, Gc)
            _matmul(Ga, y, k1)
            for a in range(n):
                for c in range(m):
                    tmp[a, c] = y[a, c] + h2 * k1[a, c]
            _matmul(Gb, tmp, k2)
            for a in range(n):
                for c in range(m):
                    tmp[a, c] = y[a, c] + h2 * k2[a, c]
            _matmul(Gb, tmp, k3)
            for a in range(n):
                for c in range(m):
                    tmp[a, c] = y[a, c] + dt * k3[a, c]
            _matmul(Gc, tmp, k4)
            for a in range(n):
                for c in range(m):
                    y[a, c] = y[a, c] + h6 * (k1[a, c] + 2.0 * k2[a, c]
                                              + 2.0 * k3[a, c] + k4[a, c])
            # end-of-step generator is the next step's start generator
            for a in range(n):
                for c in range(n):
                    Ga[a, c] = Gc[a, c]
            if (s + 1) % save_every == 0:
                for a in range(n):
                    for c in range(m):
                        out[isave, a, c] = y[a, c]
                isave += 1
    return out_arr
