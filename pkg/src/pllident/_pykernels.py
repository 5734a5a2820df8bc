"""Pure-Python twin of ``_kernels.pyx``, used when the extension is absent.

The arithmetic is written in the same order as the compiled version so the
two agree to rounding.
"""

import math

import numpy as np


def _rhs(phi, y, z, e1, e2, gamma, inv_p):
    return y, z, (gamma - (e1 + e2) * z - (1.0 + e1 * math.cos(phi)) * y) * inv_p


def rk4_integrate(eps1, eps2, gamma, phi0, y0, z0, dt, n_steps, transient, stride):
    """Integrate the model and return ``(samples, failed_step)``."""
    n_out = 0
    if n_steps > transient:
        n_out = (n_steps - transient + stride - 1) // stride
    out = np.empty((n_out, 3), dtype=np.float64)
    inv_p = 1.0 / (eps1 * eps2)
    h, hh, h6 = dt, 0.5 * dt, dt / 6.0
    phi, y, z = float(phi0), float(y0), float(z0)
    isfinite = math.isfinite
    j = 0
    for k in range(n_steps):
        if k >= transient and (k - transient) % stride == 0:
            out[j, 0] = phi
            out[j, 1] = y
            out[j, 2] = z
            j += 1
        if k == n_steps - 1:
            break
        a1, b1, c1 = _rhs(phi, y, z, eps1, eps2, gamma, inv_p)
        a2, b2, c2 = _rhs(phi + hh * a1, y + hh * b1, z + hh * c1, eps1, eps2, gamma, inv_p)
        a3, b3, c3 = _rhs(phi + hh * a2, y + hh * b2, z + hh * c2, eps1, eps2, gamma, inv_p)
        a4, b4, c4 = _rhs(phi + h * a3, y + h * b3, z + h * c3, eps1, eps2, gamma, inv_p)
        phi = phi + h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        y = y + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        z = z + h6 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        if not (isfinite(phi) and isfinite(y) and isfinite(z)):
            return out, k + 1
    return out, -1
