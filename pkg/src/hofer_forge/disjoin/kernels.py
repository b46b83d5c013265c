"""Compiled per-point RK4 kernels for the slit and push stages.

They evaluate the same fields as ``slit_terms`` / ``push_terms`` (the
cutoff is read from the same table) and are used where many independent
small integrations are needed.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .cutoff import DEFAULT_CUTOFF

TWO_PI = 2.0 * math.pi
_VALUES = DEFAULT_CUTOFF._values
_SLOPES = DEFAULT_CUTOFF._slopes
_H = DEFAULT_CUTOFF._h
_INTERVALS = DEFAULT_CUTOFF.intervals
_NORM = DEFAULT_CUTOFF.norm


@numba.njit(cache=True)
def _rho(s, values, slopes, h, intervals):
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0
    x = s / h
    i = min(int(math.floor(x)), intervals - 1)
    u = x - i
    u2 = u * u
    u3 = u2 * u
    return ((2 * u3 - 3 * u2 + 1) * values[i] + (u3 - 2 * u2 + u) * slopes[i] * h
            + (-2 * u3 + 3 * u2) * values[i + 1] + (u3 - u2) * slopes[i + 1] * h)


@numba.njit(cache=True)
def _g(s, norm):
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return math.exp(-1.0 / (s * (1.0 - s))) / norm


@numba.njit(cache=True)
def _slit_field(z, eps, values, slopes, h, intervals, norm):
    s = (math.pi * (z.real * z.real + z.imag * z.imag) - 1.0) / eps
    r = _rho(s, values, slopes, h, intervals)
    dr = -_g(s, norm)
    grad = 1j * r + z.imag * dr * (TWO_PI / eps) * z
    return 1j * grad


@numba.njit(cache=True)
def _plateau(u, width, top, values, slopes, h, intervals, norm):
    a = u / width
    b = (top - u) / width
    ra = 1.0 - _rho(a, values, slopes, h, intervals)
    rb = 1.0 - _rho(b, values, slopes, h, intervals)
    return ra * rb, (_g(a, norm) * rb - ra * _g(b, norm)) / width


@numba.njit(cache=True)
def _push_field(z, t, eps, delta, values, slopes, h, intervals, norm):
    r2 = z.real * z.real + z.imag * z.imag
    theta = math.atan2(z.imag, z.real)
    if theta < 0.0:
        theta += TWO_PI
    rho1, drho1 = _plateau(theta, delta, TWO_PI, values, slopes, h, intervals, norm)
    rho2, drho2 = _plateau(math.pi * r2 - t, delta, 1.0 + eps, values, slopes, h, intervals, norm)
    f = theta * rho1
    df = rho1 + theta * drho1
    gt = 1j * z / r2 if r2 > 0.0 else 0j
    grad = -(df * rho2 * gt + f * drho2 * TWO_PI * z) / TWO_PI
    return 1j * grad


@numba.njit(cache=True)
def _slit_one(z, duration, steps, eps, values, slopes, h, intervals, norm):
    dt = duration / steps
    for _ in range(steps):
        k1 = _slit_field(z, eps, values, slopes, h, intervals, norm)
        k2 = _slit_field(z + 0.5 * dt * k1, eps, values, slopes, h, intervals, norm)
        k3 = _slit_field(z + 0.5 * dt * k2, eps, values, slopes, h, intervals, norm)
        k4 = _slit_field(z + dt * k3, eps, values, slopes, h, intervals, norm)
        z = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return z


@numba.njit(cache=True)
def _push_one(z, t0, t1, scale, steps, eps, delta, values, slopes, h, intervals, norm):
    """dz/dt = scale * X_{P_t}(z) from t0 to t1."""
    dt = (t1 - t0) / steps
    t = t0
    for i in range(steps):
        k1 = scale * _push_field(z, t, eps, delta, values, slopes, h, intervals, norm)
        k2 = scale * _push_field(z + 0.5 * dt * k1, t + 0.5 * dt, eps, delta, values, slopes, h, intervals, norm)
        k3 = scale * _push_field(z + 0.5 * dt * k2, t + 0.5 * dt, eps, delta, values, slopes, h, intervals, norm)
        k4 = scale * _push_field(z + dt * k3, t + dt, eps, delta, values, slopes, h, intervals, norm)
        z = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * dt
    return z


@numba.njit(cache=True)
def _slit_many(z, durations, steps, eps, values, slopes, h, intervals, norm):
    out = np.empty_like(z)
    for p in range(z.size):
        out[p] = _slit_one(z[p], durations[p], steps, eps, values, slopes, h, intervals, norm)
    return out


@numba.njit(cache=True)
def _push_many(z, t0, t1, scale, steps, eps, delta, values, slopes, h, intervals, norm):
    out = np.empty_like(z)
    for p in range(z.size):
        out[p] = _push_one(z[p], t0[p], t1[p], scale[p], steps, eps, delta, values, slopes, h, intervals, norm)
    return out


@numba.njit(cache=True)
def _slit_snapshots(z, times, max_step, eps, values, slopes, h, intervals, norm):
    out = np.empty((times.size, z.size), dtype=np.complex128)
    for p in range(z.size):
        w = z[p]
        t = 0.0
        for k in range(times.size):
            gap = times[k] - t
            if gap > 0.0:
                n = max(1, int(math.ceil(gap / max_step)))
                w = _slit_one(w, gap, n, eps, values, slopes, h, intervals, norm)
                t = times[k]
            out[k, p] = w
    return out


@numba.njit(cache=True)
def _push_snapshots(z, times, max_step, eps, delta, values, slopes, h, intervals, norm):
    out = np.empty((times.size, z.size), dtype=np.complex128)
    for p in range(z.size):
        w = z[p]
        t = 0.0
        for k in range(times.size):
            gap = times[k] - t
            if gap > 0.0:
                n = max(1, int(math.ceil(gap / max_step)))
                w = _push_one(w, t, times[k], 1.0, n, eps, delta, values, slopes, h, intervals, norm)
                t = times[k]
            out[k, p] = w
    return out


def _table():
    return _VALUES, _SLOPES, _H, _INTERVALS, _NORM


def slit_flow(z, durations, steps, eps):
    """Slit flow of each point for its own duration, ``steps`` RK4 steps each."""
    z = np.ascontiguousarray(np.asarray(z, complex).ravel())
    d = np.ascontiguousarray(np.broadcast_to(np.asarray(durations, float), z.shape))
    return _slit_many(z, d, int(steps), float(eps), *_table())


def push_flow(z, t0, t1, scale, steps, eps, delta):
    """Push ODE dz/dt = scale * X_{P_t}(z) from t0 to t1, per point."""
    z = np.ascontiguousarray(np.asarray(z, complex).ravel())
    b = [np.ascontiguousarray(np.broadcast_to(np.asarray(v, float), z.shape)) for v in (t0, t1, scale)]
    return _push_many(z, *b, int(steps), float(eps), float(delta), *_table())


def slit_snapshots(z, times, max_step, eps):
    """States at every time in the sorted array ``times`` (rows), steps no longer than max_step."""
    z = np.ascontiguousarray(np.asarray(z, complex).ravel())
    return _slit_snapshots(z, np.ascontiguousarray(times, float), float(max_step), float(eps), *_table())


def push_snapshots(z, times, max_step, eps, delta):
    z = np.ascontiguousarray(np.asarray(z, complex).ravel())
    return _push_snapshots(z, np.ascontiguousarray(times, float), float(max_step), float(eps), float(delta),
                           *_table())
