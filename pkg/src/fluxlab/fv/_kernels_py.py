"""Pure-NumPy finite-volume step kernels (fallback backend).

Same surface as the compiled twin in _kernels.pyx: MUSCL reconstruction with
the monotonized-central limiter, a local Rusanov interface flux, and a
two-stage SSP-RK2 update on a periodic grid. States are [d, N] float64
arrays; the equation family is passed as an integer code plus coefficients
(see fluxlab.fv.models).
"""

import numpy as np

from .models import KIND_CUBIC, KIND_SHALLOW_WATER, KIND_SINE, KIND_VISCOUS_BURGERS, H_FLOOR


def _flux(kind, c, u):
    if kind == KIND_CUBIC:
        return ((c[2] * u + c[1]) * u + c[0]) * u
    if kind == KIND_SINE:
        return c[0] * np.sin(c[1] * u)
    if kind == KIND_VISCOUS_BURGERS:
        return c[0] * u * u
    h = np.maximum(u[0], H_FLOOR)
    m = u[1]
    return np.stack([c[0] * m, c[1] * m * m / h + 0.5 * c[2] * u[0] * u[0]])


def _speed(kind, c, u):
    if kind == KIND_CUBIC:
        return np.abs((3.0 * c[2] * u[0] + 2.0 * c[1]) * u[0] + c[0])
    if kind == KIND_SINE:
        return np.abs(c[0] * c[1] * np.cos(c[1] * u[0]))
    if kind == KIND_VISCOUS_BURGERS:
        return np.abs(2.0 * c[0] * u[0])
    h = np.maximum(u[0], H_FLOOR)
    vel = u[1] / h
    disc = c[1] * (c[1] - c[0]) * vel * vel + c[0] * c[2] * u[0]
    return np.abs(c[1] * vel) + np.sqrt(np.maximum(disc, 0.0))


def max_wave_speed(kind, coeffs, u):
    return float(_speed(kind, coeffs, u).max())


def _mc_slopes(u):
    """Monotonized-central limited slope per cell (difference across the cell)."""
    a = u - np.roll(u, 1, axis=-1)
    b = np.roll(u, -1, axis=-1) - u
    mag = np.minimum(np.minimum(2.0 * np.abs(a), 2.0 * np.abs(b)), 0.5 * np.abs(a + b))
    return np.where(a * b > 0.0, np.sign(a) * mag, 0.0)


def spatial_rhs(kind, coeffs, u, dx):
    """-(f_{i+1/2} - f_{i-1/2})/dx plus the diffusion term for viscous Burgers."""
    sigma = _mc_slopes(u)
    ul = u + 0.5 * sigma
    ur = np.roll(u, -1, axis=-1) - 0.5 * np.roll(sigma, -1, axis=-1)
    s = np.maximum(_speed(kind, coeffs, ul), _speed(kind, coeffs, ur))
    fhat = 0.5 * (_flux(kind, coeffs, ul) + _flux(kind, coeffs, ur)) - 0.5 * s * (ur - ul)
    rhs = -(fhat - np.roll(fhat, 1, axis=-1)) / dx
    if kind == KIND_VISCOUS_BURGERS:
        nu = coeffs[1]
        rhs = rhs + nu * (np.roll(u, -1, axis=-1) - 2.0 * u + np.roll(u, 1, axis=-1)) / (dx * dx)
    return rhs


def rk2_step(kind, coeffs, u, dt, dx):
    """One SSP-RK2 (Heun) step."""
    u1 = u + dt * spatial_rhs(kind, coeffs, u, dx)
    u2 = u1 + dt * spatial_rhs(kind, coeffs, u1, dx)
    return 0.5 * (u + u2)
