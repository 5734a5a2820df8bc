# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 integrator for the third-order PLL model."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, isfinite

cnp.import_array()


cdef inline void _rhs(double phi, double y, double z,
                      double e1, double e2, double gamma, double inv_p,
                      double *out) noexcept nogil:
    out[0] = y
    out[1] = z
    out[2] = (gamma - (e1 + e2) * z - (1.0 + e1 * cos(phi)) * y) * inv_p


def rk4_integrate(double eps1, double eps2, double gamma,
                  double phi0, double y0, double z0,
                  double dt, Py_ssize_t n_steps, Py_ssize_t transient,
                  Py_ssize_t stride):
    """Integrate the model and return ``(samples, failed_step)``.

    ``samples`` has shape ``(n_out, 3)``; ``failed_step`` is -1 on success or
    the first step index that produced a non-finite state.
    """
    cdef Py_ssize_t n_out = 0
    if n_steps > transient:
        n_out = (n_steps - transient + stride - 1) // stride
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_out, 3), dtype=np.float64)
    cdef double[:, ::1] buf = out
    cdef double inv_p = 1.0 / (eps1 * eps2)
    cdef double h = dt, hh = 0.5 * dt, h6 = dt / 6.0
    cdef double phi = phi0, y = y0, z = z0
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef Py_ssize_t k, j = 0
    cdef Py_ssize_t failed = -1

    with nogil:
        for k in range(n_steps):
            if k >= transient and (k - transient) % stride == 0:
                buf[j, 0] = phi
                buf[j, 1] = y
                buf[j, 2] = z
                j += 1
            if k == n_steps - 1:
                break
            _rhs(phi, y, z, eps1, eps2, gamma, inv_p, k1)
            _rhs(phi + hh * k1[0], y + hh * k1[1], z + hh * k1[2],
                 eps1, eps2, gamma, inv_p, k2)
            _rhs(phi + hh * k2[0], y + hh * k2[1], z + hh * k2[2],
                 eps1, eps2, gamma, inv_p, k3)
            _rhs(phi + h * k3[0], y + h * k3[1], z + h * k3[2],
                 eps1, eps2, gamma, inv_p, k4)
            phi = phi + h6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            y = y + h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            z = z + h6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            if not (isfinite(phi) and isfinite(y) and isfinite(z)):
                failed = k + 1
                break
    return out, failed
