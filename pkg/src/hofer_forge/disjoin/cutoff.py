"""The flat smooth step built from the mollifier exp(-1/(tau(1-tau)))."""
from __future__ import annotations

import numpy as np


def _mollifier(tau: np.ndarray) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    inside = (tau > 0.0) & (tau < 1.0)
    ti = tau[inside]
    out[inside] = np.exp(-1.0 / (ti * (1.0 - ti)))
    return out


class SmoothCutoff:
    """rho(s) = int_s^1 g / int_0^1 g with g(tau) = exp(-1/(tau(1-tau))).

    rho is 1 for s <= 0, 0 for s >= 1 and flat to all orders at both ends.
    The tail integrals are tabulated once with Gauss-Legendre quadrature on
    ``intervals`` equal cells; evaluation is cubic Hermite interpolation
    using the exact derivative -g/Z, so values and slopes are consistent.
    """

    def __init__(self, intervals: int = 4096, gauss_points: int = 10):
        if intervals < 2 or intervals % 2:
            raise ValueError("use an even number of intervals so that s = 1/2 is a node")
        self.intervals = intervals
        self.gauss_points = gauss_points
        nodes, weights = np.polynomial.legendre.leggauss(gauss_points)
        edges = np.linspace(0.0, 1.0, intervals + 1)
        h = 1.0 / intervals
        mids = 0.5 * (edges[:-1] + edges[1:])
        cell = (_mollifier(mids[:, None] + 0.5 * h * nodes[None, :]) * weights).sum(axis=1) * 0.5 * h
        # tail[i] = int_{edges[i]}^1 g
        tail = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
        self.norm = float(tail[0])
        self._h = h
        self._values = tail / self.norm
        # enforce the exact symmetry rho(1 - s) = 1 - rho(s)
        self._values = 0.5 * (self._values + 1.0 - self._values[::-1])
        self._slopes = -_mollifier(edges) / self.norm

    def __call__(self, s):
        return self.value(s)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where(s <= 0.0, 1.0, 0.0)
        inside = (s > 0.0) & (s < 1.0)
        if np.any(inside):
            out = out.copy() if out.ndim else np.array(out)
            out[inside] = self._hermite(s[inside])
        return out if out.ndim else float(out)

    def _hermite(self, s):
        x = s / self._h
        i = np.minimum(np.floor(x).astype(np.int64), self.intervals - 1)
        u = x - i
        v0, v1 = self._values[i], self._values[i + 1]
        d0, d1 = self._slopes[i] * self._h, self._slopes[i + 1] * self._h
        u2 = u * u
        u3 = u2 * u
        return (2 * u3 - 3 * u2 + 1) * v0 + (u3 - 2 * u2 + u) * d0 + (-2 * u3 + 3 * u2) * v1 + (u3 - u2) * d1

    def derivative(self, s):
        d = -_mollifier(s) / self.norm
        return d if np.ndim(d) else float(d)

    def increasing(self, s):
        """1 - rho(s): 0 for s <= 0, 1 for s >= 1."""
        return 1.0 - self.value(s)

    def increasing_derivative(self, s):
        d = _mollifier(s) / self.norm
        return d if np.ndim(d) else float(d)


DEFAULT_CUTOFF = SmoothCutoff()


def cutoff_eval(s):
    return DEFAULT_CUTOFF.value(s)
