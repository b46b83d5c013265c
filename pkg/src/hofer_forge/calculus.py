"""Generator algebra and the Hofer length estimator.

The three rules used throughout:

* conjugation  b psi_t b^{-1}       is generated by  H_t o b^{-1}
* composition  psi^K_t o psi^F_t    is generated by  K_t + F_t o (psi^K_t)^{-1}
* reparametrization psi_{t(tau)}    is generated by  H_{t(tau)} * t'(tau)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize

from .core import (
    EllipsoidModel,
    SymplecticMapChain,
    as_chain,
    as_points,
    invert_chain,
)
from .errors import DomainError, ExtremizerError
from .flows import FlowConfig, integrate_flow
from .hamiltonians import (
    Hamiltonian,
    Pullback,
    QuadraticAffine,
    QuadraticSlice,
    Reparametrized,
    Sum,
)
from .parallel import parallel_map

DEFAULT_T_NODES = 257
DEFAULT_GRID = 201


# ---------------------------------------------------------------------------
# generator algebra


def conjugate(H: Hamiltonian, b) -> Hamiltonian:
    """Generator of b psi_t b^{-1}, namely H o b^{-1}."""
    b = as_chain(b)
    if not b.primitives:
        return H
    inverse = invert_chain(b)
    if isinstance(H, QuadraticAffine) and inverse.is_affine:
        affine = inverse.affine_form(H.n)
        return QuadraticAffine(lambda t: H.quadratic_slice(t).pullback_affine(*affine))
    return Pullback(H, inverse)


def compose_generators(K: Hamiltonian, F: Hamiltonian, flowK: Callable[[float], SymplecticMapChain]) -> Hamiltonian:
    """Generator of psi^K_t o psi^F_t, given the time-t map of K."""
    return Sum((K, Pullback(F, lambda t: invert_chain(flowK(t)))))


def reparametrize(H: Hamiltonian, time_map: Callable, derivative: Callable) -> Hamiltonian:
    return Reparametrized(H, time_map, derivative)


# ---------------------------------------------------------------------------
# extremization over the closed ellipsoid


def _max_quadratic(s: QuadraticSlice, weights: np.ndarray, alpha: float):
    """Exact max and argmax of a diagonal quadratic slice on {N <= alpha}.

    In action variables a_j = pi|z_j|^2 the best angle aligns z_j with l_j,
    leaving the concave problem max c + sum(q_j a_j + beta_j sqrt(a_j)) on the
    simplex sum k_j a_j <= alpha, beta_j = 2|l_j|/sqrt(pi).  The KKT system
    gives sqrt(a_j) = beta_j / (2(mu k_j - q_j)) for a multiplier mu >= 0.
    """
    q, k = s.quad, weights
    beta = 2.0 * np.abs(s.linear) / np.sqrt(np.pi)
    active = beta > 0
    ratio = q / k
    # bounded only for mu >= q_j / k_j on every coordinate
    mu_lo = max(0.0, float(np.max(ratio)))

    def actions(mu):
        a = np.zeros_like(q)
        with np.errstate(divide="ignore"):
            a[active] = (beta[active] / (2.0 * (mu * k[active] - q[active]))) ** 2
        return a

    def budget(mu):
        return float(np.sum(k * actions(mu)))

    mu = mu_lo
    if active.any() and budget(mu_lo) > alpha:
        lo = mu_lo + 1e-12 * max(1.0, abs(mu_lo))
        if budget(lo) > alpha:
            hi = lo + max(1.0, abs(lo))
            while budget(hi) > alpha:
                hi = lo + 2.0 * (hi - lo)
            mu = brentq(lambda m: budget(m) - alpha, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        else:
            mu = lo
    a = actions(mu)
    spent = float(np.sum(k * a))
    if spent > alpha:
        a *= alpha / spent
        spent = alpha
    leftover = alpha - spent
    if mu_lo > 0 and leftover > 0:
        # the remaining budget goes to the best coordinate with no linear term
        free = np.flatnonzero(~active & (ratio >= mu_lo))
        if free.size:
            a[free[0]] += leftover / k[free[0]]
    value = s.constant + float(np.sum(q * a + beta * np.sqrt(a)))
    phase = np.where(active, s.linear / np.where(active, np.abs(s.linear), 1.0), 1.0)
    arg = np.sqrt(a / np.pi) * phase
    return value, arg


def extremize_quadratic(s: QuadraticSlice, model: EllipsoidModel):
    """(max, argmax, min, argmin) of a quadratic slice over the closed model."""
    k = model.weights.as_array()
    vmax, amax = _max_quadratic(s, k, model.alpha)
    vneg, amin = _max_quadratic(s.scale(-1.0), k, model.alpha)
    return vmax, amax, -vneg, amin


@dataclass(frozen=True)
class GridExtremizer:
    """Uniform grid over the ellipsoid plus compass-search refinement.

    For n > 1 the per-axis resolution is chosen so that the total grid has
    about ``resolution**2`` points.
    """

    resolution: int = DEFAULT_GRID
    refine_steps: int = 20
    candidates: int = 4

    def grid(self, model: EllipsoidModel) -> np.ndarray:
        n = model.n
        per_axis = max(5, int(round(self.resolution ** (1.0 / n))))
        radii = np.sqrt(model.alpha / (np.pi * model.weights.as_array()))
        axes = []
        for r in radii:
            line = np.linspace(-r, r, per_axis)
            axes.extend([line, line])
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * n)
        z = mesh[:, 0::2] + 1j * mesh[:, 1::2]
        z = z[model.contains(z)]
        # boundary ring on each coordinate axis so edge maxima are seen
        theta = np.linspace(0.0, 2 * np.pi, 4 * self.resolution, endpoint=False)
        rings = []
        for j, r in enumerate(radii):
            ring = np.zeros((theta.size, n), complex)
            ring[:, j] = r * np.exp(1j * theta)
            rings.append(ring)
        return np.concatenate([z] + rings, axis=0)

    @staticmethod
    def _project(model, z):
        nz = model.norm_function(z)
        scale = np.where(nz > model.alpha, np.sqrt(model.alpha / np.where(nz > 0, nz, 1.0)), 1.0)
        return z * scale[..., None]

    def _refine(self, fn, model, z0, sign, step):
        z = z0.copy()
        best = sign * fn(z[None])[0]
        n = z.size
        dirs = []
        for j in range(n):
            for u in (1.0, -1.0, 1j, -1j):
                d = np.zeros(n, complex)
                d[j] = u
                dirs.append(d)
        dirs = np.array(dirs)
        for _ in range(self.refine_steps):
            for _inner in range(8):
                trial = self._project(model, z[None] + step * dirs)
                vals = sign * fn(trial)
                i = int(np.argmax(vals))
                if vals[i] > best:
                    best, z = float(vals[i]), trial[i]
                else:
                    break
            step *= 0.5
        return self._polish(fn, model, z, sign, best)

    @staticmethod
    def _polish(fn, model, z, sign, best):
        """SLSQP pass with the ellipsoid as an inequality constraint."""
        n = z.size
        k = model.weights.as_array()

        def unpack(x):
            return (x[0::2] + 1j * x[1::2])[None]

        x0 = np.empty(2 * n)
        x0[0::2], x0[1::2] = z.real, z.imag
        res = minimize(
            lambda x: -sign * float(fn(unpack(x))[0]),
            x0,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": lambda x: model.alpha - np.pi * np.sum(k * (x[0::2] ** 2 + x[1::2] ** 2))}],
            options={"ftol": 1e-14, "maxiter": 200},
        )
        cand = GridExtremizer._project(model, unpack(res.x))
        val = sign * float(fn(cand)[0])
        if np.isfinite(val) and val > best:
            return cand[0]
        return z

    def extrema(self, fn, model: EllipsoidModel):
        """(max, argmax, min, argmin) of a real function of points."""
        pts = self.grid(model)
        vals = np.asarray(fn(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ExtremizerError("non-finite Hamiltonian values on the extremization grid")
        step = 2.0 * np.sqrt(model.alpha / (np.pi * float(np.min(model.weights.as_array())))) / max(
            4, int(round(self.resolution ** (1.0 / model.n)))
        )
        out = []
        for sign in (1.0, -1.0):
            order = np.argsort(-sign * vals)[: self.candidates]
            best = None
            for i in order:
                z = self._refine(fn, model, pts[i], sign, step)
                v = float(fn(z[None])[0])
                if best is None or sign * v > sign * best[0]:
                    best = (v, z)
            out.append(best)
        return out[0][0], out[0][1], out[1][0], out[1][1]


@dataclass(frozen=True)
class AutoExtremizer:
    """Closed form whenever the slice is quadratic-affine, grid otherwise."""

    grid: GridExtremizer = field(default_factory=GridExtremizer)

    def extrema_at(self, H: Hamiltonian, t: float, model: EllipsoidModel):
        s = H.quadratic_slice(t)
        if s is not None:
            return extremize_quadratic(s, model)
        return self.grid.extrema(lambda z: H.value(t, z), model)

    def extrema(self, H: Hamiltonian, ts, model: EllipsoidModel):
        results = parallel_map(lambda t: self.extrema_at(H, t, model), ts)
        mx = np.array([r[0] for r in results])
        mn = np.array([r[2] for r in results])
        if not (np.all(np.isfinite(mx)) and np.all(np.isfinite(mn))):
            raise ExtremizerError("extremizer returned non-finite values")
        return mx, mn


# ---------------------------------------------------------------------------
# loops and lengths


@dataclass
class LoopGenerator:
    """A generator on t in [0, 1] whose time-1 map is the identity.

    ``extremizer`` overrides how per-time extrema over ``domain`` are found;
    it needs a method ``extrema(generator, ts, domain) -> (max, min)``.
    """

    generator: Hamiltonian
    domain: EllipsoidModel
    extremizer: Optional[object] = None

    def __post_init__(self):
        if self.generator.n is not None and self.generator.n != self.domain.n:
            raise DomainError(f"generator lives in C^{self.generator.n} but the domain in C^{self.domain.n}")


@dataclass(frozen=True)
class HoferReport:
    ell_plus: float
    ell_minus: float
    total: float
    quad_error: float
    t_nodes: np.ndarray = field(repr=False, compare=False, default=None)
    max_values: np.ndarray = field(repr=False, compare=False, default=None)
    min_values: np.ndarray = field(repr=False, compare=False, default=None)
    reference: float = 0.0


def simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights for n equispaced nodes on [0, 1]."""
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Simpson quadrature needs an odd node count >= 3, got {n}")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (n - 1))


def simpson(values) -> float:
    values = np.asarray(values)
    return complex(np.sum(simpson_weights(values.shape[0]) * values)) if np.iscomplexobj(values) else float(
        np.sum(simpson_weights(values.shape[0]) * values)
    )


def reference_level(model: EllipsoidModel) -> float:
    """Midpoint of the undeformed momentum range over the closed model.

    Lengths are measured as max H_t minus this level and this level minus
    min H_t, so the undeformed circle action has ell_plus = ell_minus =
    alpha / 2.  Only differences between loops that agree off a compact set
    are meaningful; those do not depend on the choice.
    """
    return model.h_max - 0.5 * model.alpha


def _extrema(loop: LoopGenerator, ts):
    ext = loop.extremizer or AutoExtremizer()
    return ext.extrema(loop.generator, ts, loop.domain)


def hofer_length(loop: LoopGenerator, t_nodes: int = DEFAULT_T_NODES, estimate_error: bool = True) -> HoferReport:
    """ell_plus, ell_minus by composite Simpson with per-time extremization."""
    if loop.domain.alpha <= 0:
        raise DomainError("empty domain")
    simpson_weights(t_nodes)
    ts = np.linspace(0.0, 1.0, t_nodes)
    c = reference_level(loop.domain)
    mx, mn = _extrema(loop, ts)
    plus = simpson(mx - c)
    minus = simpson(c - mn)
    err = 0.0
    if estimate_error:
        fine = np.linspace(0.0, 1.0, 2 * t_nodes - 1)
        odd = fine[1::2]
        mx_o, mn_o = _extrema(loop, odd)
        mx_f = np.empty(fine.size)
        mn_f = np.empty(fine.size)
        mx_f[0::2], mx_f[1::2] = mx, mx_o
        mn_f[0::2], mn_f[1::2] = mn, mn_o
        err = (abs(simpson(mx_f - c) - plus) + abs(simpson(c - mn_f) - minus)) / 15.0
    return HoferReport(plus, minus, plus + minus, float(err), ts, mx, mn, c)


def verify_loop_closure(
    loop: LoopGenerator,
    samples: int = 50,
    steps: int = 10_000,
    seed: int = 0,
    points=None,
    method: str = "rk4",
) -> float:
    """max |z - Phi_1(z)| over random domain points (or the given points)."""
    if points is None:
        points = loop.domain.sample(np.random.default_rng(seed), samples)
    z = as_points(points, loop.domain.n)
    image = integrate_flow(loop.generator, 0.0, 1.0, z, FlowConfig(method=method, steps=steps))
    return float(np.max(np.abs(image - z)))
