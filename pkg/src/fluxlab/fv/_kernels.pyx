# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled finite-volume step kernels (hot path of trajectory generation).

Mirrors _kernels_py exactly: MUSCL reconstruction with the MC limiter, local
Rusanov interface fluxes, SSP-RK2 time stepping, periodic boundaries. States
are [d, N] float64 arrays, the family an integer code (fluxlab.fv.models).
"""

import numpy as np

from libc.math cimport cos, fabs, sin, sqrt

cdef int KIND_CUBIC = 0
cdef int KIND_SINE = 1
cdef int KIND_SHALLOW_WATER = 2
cdef int KIND_VISCOUS_BURGERS = 3

cdef double H_FLOOR = 1e-8


cdef inline double _flux1(int kind, double c0, double c1, double c2, double u) noexcept nogil:
    if kind == 0:  # cubic
        return ((c2 * u + c1) * u + c0) * u
    elif kind == 1:  # sine
        return c0 * sin(c1 * u)
    else:  # viscous burgers advective part
        return c0 * u * u


cdef inline double _speed1(int kind, double c0, double c1, double c2, double u) noexcept nogil:
    if kind == 0:
        return fabs((3.0 * c2 * u + 2.0 * c1) * u + c0)
    elif kind == 1:
        return fabs(c0 * c1 * cos(c1 * u))
    else:
        return fabs(2.0 * c0 * u)


cdef inline double _speed_sw(double alpha, double gamma, double beta, double h, double m) noexcept nogil:
    cdef double hf = h if h > H_FLOOR else H_FLOOR
    cdef double vel = m / hf
    cdef double disc = gamma * (gamma - alpha) * vel * vel + alpha * beta * h
    if disc < 0.0:
        disc = 0.0
    return fabs(gamma * vel) + sqrt(disc)


cdef inline double _mc(double a, double b) noexcept nogil:
    cdef double mag, cand
    if a * b > 0.0:
        mag = 2.0 * fabs(a)
        cand = 2.0 * fabs(b)
        if cand < mag:
            mag = cand
        cand = 0.5 * fabs(a + b)
        if cand < mag:
            mag = cand
        return mag if a > 0.0 else -mag
    return 0.0


cdef void _rhs_scalar(int kind, double c0, double c1, double c2, double[::1] u,
                      double dx, double[::1] slopes, double[::1] fhat,
                      double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, im, ip
    cdef double ul, ur, sl, sr, s, diff
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        slopes[i] = _mc(u[i] - u[im], u[ip] - u[i])
    for i in range(n):
        ip = i + 1 if i < n - 1 else 0
        ul = u[i] + 0.5 * slopes[i]
        ur = u[ip] - 0.5 * slopes[ip]
        sl = _speed1(kind, c0, c1, c2, ul)
        sr = _speed1(kind, c0, c1, c2, ur)
        s = sl if sl > sr else sr
        fhat[i] = 0.5 * (_flux1(kind, c0, c1, c2, ul) + _flux1(kind, c0, c1, c2, ur)) \
            - 0.5 * s * (ur - ul)
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        out[i] = -(fhat[i] - fhat[im]) / dx
    if kind == KIND_VISCOUS_BURGERS:
        for i in range(n):
            im = i - 1 if i > 0 else n - 1
            ip = i + 1 if i < n - 1 else 0
            diff = c1 * (u[ip] - 2.0 * u[i] + u[im]) / (dx * dx)
            out[i] = out[i] + diff


cdef void _rhs_sw(double alpha, double gamma, double beta, double[:, ::1] u,
                  double dx, double[:, ::1] slopes, double[:, ::1] fhat,
                  double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = u.shape[1]
    cdef Py_ssize_t i, im, ip
    cdef double hl, hr, ml, mr, sl, sr, s, hf
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        slopes[0, i] = _mc(u[0, i] - u[0, im], u[0, ip] - u[0, i])
        slopes[1, i] = _mc(u[1, i] - u[1, im], u[1, ip] - u[1, i])
    for i in range(n):
        ip = i + 1 if i < n - 1 else 0
        hl = u[0, i] + 0.5 * slopes[0, i]
        ml = u[1, i] + 0.5 * slopes[1, i]
        hr = u[0, ip] - 0.5 * slopes[0, ip]
        mr = u[1, ip] - 0.5 * slopes[1, ip]
        sl = _speed_sw(alpha, gamma, beta, hl, ml)
        sr = _speed_sw(alpha, gamma, beta, hr, mr)
        s = sl if sl > sr else sr
        fhat[0, i] = 0.5 * (alpha * ml + alpha * mr) - 0.5 * s * (hr - hl)
        hf = hl if hl > H_FLOOR else H_FLOOR
        sl = gamma * ml * ml / hf + 0.5 * beta * hl * hl
        hf = hr if hr > H_FLOOR else H_FLOOR
        sr = gamma * mr * mr / hf + 0.5 * beta * hr * hr
        fhat[1, i] = 0.5 * (sl + sr) - 0.5 * s * (mr - ml)
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        out[0, i] = -(fhat[0, i] - fhat[0, im]) / dx
        out[1, i] = -(fhat[1, i] - fhat[1, im]) / dx


def max_wave_speed(int kind, double[::1] coeffs, double[:, ::1] u):
    cdef Py_ssize_t n = u.shape[1]
    cdef Py_ssize_t i
    cdef double best = 0.0, s
    if kind == KIND_SHALLOW_WATER:
        for i in range(n):
            s = _speed_sw(coeffs[0], coeffs[1], coeffs[2], u[0, i], u[1, i])
            if s > best:
                best = s
    else:
        for i in range(n):
            s = _speed1(kind, coeffs[0], coeffs[1],
                        coeffs[2] if coeffs.shape[0] > 2 else 0.0, u[0, i])
            if s > best:
                best = s
    return best


cdef void _rhs(int kind, double[::1] coeffs, double[:, ::1] u, double dx,
               double[:, ::1] slopes, double[:, ::1] fhat, double[:, ::1] out) noexcept nogil:
    if kind == KIND_SHALLOW_WATER:
        _rhs_sw(coeffs[0], coeffs[1], coeffs[2], u, dx, slopes, fhat, out)
    else:
        _rhs_scalar(kind, coeffs[0], coeffs[1],
                    coeffs[2] if coeffs.shape[0] > 2 else 0.0,
                    u[0], dx, slopes[0], fhat[0], out[0])


def spatial_rhs(int kind, double[::1] coeffs, double[:, ::1] u, double dx):
    cdef Py_ssize_t d = u.shape[0], n = u.shape[1]
    out = np.empty((d, n))
    slopes = np.empty((d, n))
    fhat = np.empty((d, n))
    cdef double[:, ::1] out_v = out, slopes_v = slopes, fhat_v = fhat
    _rhs(kind, coeffs, u, dx, slopes_v, fhat_v, out_v)
    return out


def rk2_step(int kind, double[::1] coeffs, double[:, ::1] u, double dt, double dx):
    cdef Py_ssize_t d = u.shape[0], n = u.shape[1]
    cdef Py_ssize_t j, i
    out = np.empty((d, n))
    u1 = np.empty((d, n))
    rhs = np.empty((d, n))
    slopes = np.empty((d, n))
    fhat = np.empty((d, n))
    cdef double[:, ::1] out_v = out, u1_v = u1, rhs_v = rhs
    cdef double[:, ::1] slopes_v = slopes, fhat_v = fhat
    _rhs(kind, coeffs, u, dx, slopes_v, fhat_v, rhs_v)
    for j in range(d):
        for i in range(n):
            u1_v[j, i] = u[j, i] + dt * rhs_v[j, i]
    _rhs(kind, coeffs, u1_v, dx, slopes_v, fhat_v, rhs_v)
    for j in range(d):
        for i in range(n):
            out_v[j, i] = 0.5 * (u[j, i] + (u1_v[j, i] + dt * rhs_v[j, i]))
    return out
