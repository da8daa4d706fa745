# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the tiling layer's fast dynamics.

Both entry points mutate ``h``, ``u`` and ``V`` in place and take the
precomputed drive ``c = W x - sqrt(alpha) b``, which is constant within a
sample.
"""

import numpy as np

cimport numpy as cnp
from libc.float cimport DBL_MIN
from libc.math cimport fabs

cnp.import_array()


cdef inline double _pos(double v) noexcept nogil:
    # subnormals flushed to zero: they stall the loop by orders of magnitude
    return v if v >= DBL_MIN else 0.0


cdef double _step(const double[::1] c, double[::1] h, double[::1] u, double[:, ::1] V,
                  double[::1] hn, double[::1] un, double[::1] vtu,
                  double gh, double gu, double gv) noexcept nogil:
    # One simultaneous projected update; returns max |change| over h and u.
    cdef Py_ssize_t m = h.shape[0]
    cdef Py_ssize_t i, j
    cdef double vh, ui, vij, d, dmax = 0.0
    for j in range(m):
        vtu[j] = 0.0
    for i in range(m):
        ui = u[i]
        vh = 0.0
        for j in range(m):
            vij = V[i, j]
            vh += vij * h[j]
            vtu[j] += vij * ui
            V[i, j] = _pos(vij + gv * (ui * h[j] - vij))
        un[i] = _pos(ui + gu * (vh - ui))
    for i in range(m):
        hn[i] = _pos(h[i] + gh * (c[i] - vtu[i]))
    for i in range(m):
        d = fabs(hn[i] - h[i])
        if d > dmax:
            dmax = d
        d = fabs(un[i] - u[i])
        if d > dmax:
            dmax = d
        h[i] = hn[i]
        u[i] = un[i]
    return dmax


cdef double _step_rank1(const double[::1] c, double[::1] h, double[::1] u,
                        double[::1] pu, double[::1] ph,
                        double gh, double gu) noexcept nogil:
    # Same update with V held as the outer product pu ph^T (exact when gamma_V = 1).
    cdef Py_ssize_t m = h.shape[0]
    cdef Py_ssize_t i
    cdef double s_h = 0.0, s_u = 0.0, hn, un, d, dmax = 0.0
    for i in range(m):
        s_h += ph[i] * h[i]
        s_u += pu[i] * u[i]
    for i in range(m):
        un = _pos(u[i] + gu * (pu[i] * s_h - u[i]))
        hn = _pos(h[i] + gh * (c[i] - ph[i] * s_u))
        pu[i] = u[i]
        ph[i] = h[i]
        d = fabs(hn - h[i])
        if d > dmax:
            dmax = d
        d = fabs(un - u[i])
        if d > dmax:
            dmax = d
        h[i] = hn
        u[i] = un
    return dmax


def fast_step_inplace(const double[::1] c, double[::1] h, double[::1] u, double[:, ::1] V,
                      double gh, double gu, double gv):
    """Apply one fast step in place; returns the max change over ``h`` and ``u``."""
    cdef Py_ssize_t m = h.shape[0]
    cdef double[::1] hn = np.empty(m)
    cdef double[::1] un = np.empty(m)
    cdef double[::1] vtu = np.empty(m)
    cdef double d
    with nogil:
        d = _step(c, h, u, V, hn, un, vtu, gh, gu, gv)
    return d


def relax_inplace(const double[::1] c, double[::1] h, double[::1] u, double[:, ::1] V,
                  double gh, double gu, double gv, Py_ssize_t max_iters, double tol):
    """Iterate fast steps in place until the change drops below ``tol``.

    Returns ``(iterations, converged)``.
    """
    cdef Py_ssize_t m = h.shape[0]
    cdef double[::1] hn = np.empty(m)
    cdef double[::1] un = np.empty(m)
    cdef double[::1] vtu = np.empty(m)
    cdef double[::1] pu = np.empty(m)
    cdef double[::1] ph = np.empty(m)
    cdef Py_ssize_t it = 0, i, j
    cdef double d = 0.0
    cdef bint converged = False
    cdef bint rank1 = gv == 1.0
    with nogil:
        if rank1:
            if max_iters >= 1:
                for i in range(m):
                    pu[i] = u[i]
                    ph[i] = h[i]
                d = _step(c, h, u, V, hn, un, vtu, gh, gu, gv)
                it = 1
                converged = d < tol
                while not converged and it < max_iters:
                    d = _step_rank1(c, h, u, pu, ph, gh, gu)
                    it += 1
                    converged = d < tol
                if it > 1:
                    for i in range(m):
                        for j in range(m):
                            V[i, j] = _pos(pu[i] * ph[j])
        else:
            while it < max_iters:
                d = _step(c, h, u, V, hn, un, vtu, gh, gu, gv)
                it += 1
                if d < tol:
                    converged = True
                    break
    return it, converged
