"""A family of disc disjoiners parametrized by an invariant of the other coordinates.

Write points of C^n as (z1, w) with z1 the distinguished coordinate and
N(w) = pi * sum_{j != j1} k_j |w_j|^2.  The generator

    H_tau(z1, w) = rho_V(N) * lam^2 * F^{A(N), eps}_tau(z1 / lam)

with lam^2 = A1 + eps_bar/2, A(N) = A2(N) / lam^2 and eps = (eps_bar/2)/lam^2
depends on w only through N, so its flow preserves N and moves w along the
circle action generated by N.  At tau = 1 and wherever rho_V = 1 it carries
{pi|z1|^2 <= A1} into {A2(N) < pi|z1|^2 < A1 + A2(N) + eps_bar}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import TWO_PI, EllipsoidModel, IntegratedFlow, SymplecticMapChain, as_points
from ..errors import ContainmentError, DisjoinConfigError
from ..hamiltonians import Hamiltonian
from .cutoff import DEFAULT_CUTOFF
from .discs import calibrate_collar, disc_terms, push_terms, slit_terms

RHO = DEFAULT_CUTOFF


@dataclass(frozen=True)
class Affine:
    """x -> intercept + slope * x."""

    intercept: float
    slope: float = 0.0

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class FamilyDisjoinSpec:
    """Inputs of the family disjoiner.

    ``window`` is (n_lo, n_hi): rho_V is 1 for N <= n_lo and 0 for N >= n_hi.
    It defaults to n_lo = the right end of C = {A1 >= 0, A2 >= 0} and n_hi
    halfway between n_lo and the largest N the model allows next to the
    support.
    """

    model: EllipsoidModel
    index: int
    A1: Affine
    A2: Affine
    eps_bar: float
    window: Optional[tuple] = None

    def __post_init__(self):
        for name in ("A1", "A2"):
            val = getattr(self, name)
            if not isinstance(val, Affine):
                object.__setattr__(self, name, Affine(float(val)))
        if self.A1.slope != 0.0:
            raise DisjoinConfigError("A1 must be constant: the disc being disjoined has a fixed size")
        if not self.A1.intercept > 0:
            raise DisjoinConfigError(f"A1 must be positive, got {self.A1.intercept}")
        if self.A2.slope >= 0:
            raise DisjoinConfigError("A2 must be strictly decreasing so that C is a bounded interval")
        if not 0 <= self.index < self.model.n:
            raise DisjoinConfigError(f"coordinate index {self.index} outside C^{self.model.n}")
        if not self.eps_bar > 0:
            raise DisjoinConfigError("eps_bar must be positive")
        if self.window is None:
            n_lo = self.c_interval[1]
            n_hi = n_lo + 0.5 * (self.max_window_end() - n_lo)
            object.__setattr__(self, "window", (n_lo, n_hi))
        n_lo, n_hi = self.window
        if not (n_lo >= self.c_interval[1] - 1e-15 and n_hi > n_lo):
            raise DisjoinConfigError(f"cutoff window {self.window} must start at or after the end of C")

    @property
    def k1(self) -> float:
        return float(self.model.weights[self.index])

    @property
    def c_interval(self):
        """C = {A1 >= 0, A2 >= 0} as an interval of N values."""
        return 0.0, max(0.0, -self.A2.intercept / self.A2.slope)

    @property
    def lam2(self) -> float:
        return self.A1.intercept + 0.5 * self.eps_bar

    @property
    def eps(self) -> float:
        return 0.5 * self.eps_bar / self.lam2

    def outer_area(self, N):
        """Bound on pi|z1|^2 over the support at invariant value N."""
        return self.A1.intercept + self.eps_bar + np.maximum(self.A2(N), 0.0)

    def max_window_end(self) -> float:
        """Largest N with k1 * (A1 + eps_bar) + N below alpha."""
        return self.model.alpha - self.k1 * (self.A1.intercept + self.eps_bar)

    def containment_slack(self) -> float:
        """min over the support of alpha - (k1 * pi|z1|^2 + N); positive iff contained.

        The bound is piecewise affine in N, so it suffices to check the ends of
        the window and the root of A2.
        """
        n_hi = self.window[1]
        nodes = [0.0, n_hi] + [n for n in (self.c_interval[1],) if 0.0 <= n <= n_hi]
        return min(self.model.alpha - (self.k1 * float(self.outer_area(n)) + n) for n in nodes)

    def check_containment(self):
        slack = self.containment_slack()
        if slack <= 0:
            raise ContainmentError(
                f"support leaves the model: k1*(A1 + A2(N) + eps_bar) + N < alpha fails by {-slack:.4g} "
                f"(k1={self.k1}, A1={self.A1.intercept}, A2(0)={self.A2.intercept}, eps_bar={self.eps_bar}, "
                f"alpha={self.model.alpha})"
            )
        if not 0.0 < self.eps < 1.0:
            raise ContainmentError(f"rescaled slack eps={self.eps} must lie in (0, 1)")
        return slack


class FamilyDisjoinHamiltonian(Hamiltonian):
    """H_tau(z1, w) = rho_V(N) lam^2 F^{A(N), eps}_tau(z1/lam) on C^n.

    ``flow`` integrates the structured equations: for fixed N the z1-motion
    is a slit flow for time rho_V T rho~(2 tau) followed by the push ODE
    dz/dt = rho_V X_{P_t}(z) for t from 0 to A(N) rho~(2 tau - 1); w turns
    along the circle action of N by the accumulated phase of dH/dN.
    """

    def __init__(self, spec: FamilyDisjoinSpec, T: float, delta: float, slit_steps=8000, push_steps=500):
        self.spec = spec
        self.n = spec.model.n
        self.T = T
        self.delta = delta
        self.lam = math.sqrt(spec.lam2)
        self.eps = spec.eps
        self.slit_steps = slit_steps
        self.push_steps = push_steps
        k = spec.model.weights.as_array().copy()
        k[spec.index] = 0.0
        self._kw = k

    # -- pieces -------------------------------------------------------------
    def invariant(self, z) -> np.ndarray:
        return np.pi * np.sum(self._kw * np.abs(z) ** 2, axis=-1)

    def window(self, N):
        n_lo, n_hi = self.spec.window
        width = n_hi - n_lo
        s = (N - n_lo) / width
        return RHO.value(s), RHO.derivative(s) / width

    def rescaled_A(self, N):
        return self.spec.A2(N) / self.spec.lam2

    # -- Hamiltonian interface ---------------------------------------------
    def value(self, tau, z):
        z = as_points(z, self.n)
        N = self.invariant(z)
        rv, _ = self.window(N)
        v, _, _ = disc_terms(tau, z[..., self.spec.index] / self.lam, self.rescaled_A(N), self.eps, self.delta, self.T)
        return rv * self.spec.lam2 * v

    def dH_dN(self, tau, z1, N):
        rv, drv = self.window(N)
        v, _, d_a = disc_terms(tau, z1 / self.lam, self.rescaled_A(N), self.eps, self.delta, self.T)
        return drv * self.spec.lam2 * v + rv * self.spec.A2.slope * d_a

    def gradient(self, tau, z):
        z = as_points(z, self.n)
        N = self.invariant(z)
        j = self.spec.index
        rv, drv = self.window(N)
        v, g, d_a = disc_terms(tau, z[..., j] / self.lam, self.rescaled_A(N), self.eps, self.delta, self.T)
        dn = drv * self.spec.lam2 * v + rv * self.spec.A2.slope * d_a
        out = (dn[..., None] * TWO_PI * self._kw) * z
        out[..., j] = rv * self.lam * g
        return out

    # -- structured flow -----------------------------------------------------
    def _stage_params(self, u, N):
        rv, drv = self.window(N)
        slit_base = self.T * float(RHO.increasing(2.0 * min(u, 0.5)))
        r_u = float(RHO.increasing(2.0 * u - 1.0)) if u > 0.5 else 0.0
        t_final = self.rescaled_A(N) * r_u
        return rv, drv, slit_base, r_u, t_final

    def _slit(self, zeta, duration, steps):
        """RK4 for dz/ds = duration * X_slit(z), s in [0, 1]; duration per point."""
        h = 1.0 / steps
        for _ in range(steps):
            k1 = 1j * slit_terms(zeta, self.eps)[1]
            k2 = 1j * slit_terms(zeta + 0.5 * h * duration * k1, self.eps)[1]
            k3 = 1j * slit_terms(zeta + 0.5 * h * duration * k2, self.eps)[1]
            k4 = 1j * slit_terms(zeta + h * duration * k3, self.eps)[1]
            zeta = zeta + (h / 6.0) * duration * (k1 + 2 * k2 + 2 * k3 + k4)
        return zeta

    def _push(self, zeta, t_final, rv, drv, r_u, steps, forward=True):
        """RK4 for the push ODE with the N-phase carried as an extra state."""
        lam2, slope = self.spec.lam2, self.spec.A2.slope

        def rhs(s, z):
            t = t_final * s
            p, g, dt = push_terms(z, t, self.eps, self.delta)
            dz = t_final * rv * 1j * g
            dphi = drv * lam2 * t_final * p + rv * slope * r_u * (p + t * dt)
            return dz, dphi

        h = (1.0 if forward else -1.0) / steps
        s = 0.0 if forward else 1.0
        phase = np.zeros(np.shape(zeta))
        for _ in range(steps):
            a1, b1 = rhs(s, zeta)
            a2, b2 = rhs(s + 0.5 * h, zeta + 0.5 * h * a1)
            a3, b3 = rhs(s + 0.5 * h, zeta + 0.5 * h * a2)
            a4, b4 = rhs(s + h, zeta + h * a3)
            zeta = zeta + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
            phase = phase + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
            s += h
        return zeta, phase

    def _apply_time(self, z, u, forward=True):
        """Time-u map (forward) or its inverse, on points of C^n."""
        z = as_points(z, self.n).copy()
        if u <= 0:
            return z
        j = self.spec.index
        N = self.invariant(z)
        rv, drv, slit_base, r_u, t_final = self._stage_params(u, N)
        zeta = z[..., j] / self.lam
        lam2 = self.spec.lam2
        phase = np.zeros(N.shape)
        if forward:
            if slit_base > 0:
                phase += drv * lam2 * slit_terms(zeta, self.eps)[0] * slit_base
                zeta = self._slit(zeta, rv * slit_base, self.slit_steps)
            if r_u > 0:
                zeta, ph = self._push(zeta, t_final, rv, drv, r_u, self.push_steps, True)
                phase += ph
        else:
            if r_u > 0:
                zeta, ph = self._push(zeta, t_final, rv, drv, r_u, self.push_steps, False)
                phase += ph
            if slit_base > 0:
                zeta = self._slit(zeta, -rv * slit_base, self.slit_steps)
                phase -= drv * lam2 * slit_terms(zeta, self.eps)[0] * slit_base
        out = z * np.exp(1j * TWO_PI * self._kw * phase[..., None])
        out[..., j] = self.lam * zeta
        return out

    def flow(self, t0: float, t1: float, z):
        if not (0.0 <= t0 <= 1.0 and 0.0 <= t1 <= 1.0):
            raise ValueError("family flow is defined for times in [0, 1]")
        z = self._apply_time(z, t0, forward=False)
        return self._apply_time(z, t1, forward=True)


@dataclass(frozen=True)
class FamilyDisjoiner:
    """Time-parametrized map chain on C x W; call with tau for the time-tau map."""

    spec: FamilyDisjoinSpec
    generator: FamilyDisjoinHamiltonian
    T: float
    delta: float
    margins: dict = field(default_factory=dict)

    def __call__(self, tau: float) -> SymplecticMapChain:
        if tau == 0:
            return SymplecticMapChain()
        return SymplecticMapChain((IntegratedFlow(self.generator, 0.0, float(tau)),))

    def apply(self, z, tau: float = 1.0):
        return self.generator.flow(0.0, tau, z)

    def verify_disjointness(self, samples: int = 500, seed: int = 0, tau: float = 1.0):
        """Sample {pi|z1|^2 <= A1} over C and report the smallest gap pi|z1'|^2 - A2(N)."""
        rng = np.random.default_rng(seed)
        spec = self.spec
        n = spec.model.n
        j = spec.index
        n_c = spec.c_interval[1]
        z = np.zeros((samples, n), complex)
        a1 = spec.A1.intercept
        # deterministic boundary circle plus uniform interior
        n_b = samples // 3
        theta = np.linspace(0, TWO_PI, n_b, endpoint=False)
        z[:n_b, j] = math.sqrt(a1 / math.pi) * np.exp(1j * theta)
        m = samples - n_b
        z[n_b:, j] = np.sqrt(rng.uniform(0, a1, m) / math.pi) * np.exp(1j * rng.uniform(0, TWO_PI, m))
        others = [i for i in range(n) if i != j]
        if others:
            target = rng.uniform(0.0, n_c, samples)
            share = rng.dirichlet(np.ones(len(others)), samples)
            kw = spec.model.weights.as_array()[others]
            mag = np.sqrt(target[:, None] * share / (np.pi * kw))
            z[:, others] = mag * np.exp(1j * rng.uniform(0, TWO_PI, (samples, len(others))))
        image = self.apply(z, tau)
        N = self.generator.invariant(image)
        gap = np.pi * np.abs(image[:, j]) ** 2 - spec.A2(N)
        return float(gap.min()), z, image


def family_disjoiner(spec: FamilyDisjoinSpec, slit_steps: int = 8000, push_steps: int = 500,
                     T: Optional[float] = None) -> FamilyDisjoiner:
    spec.check_containment()
    T, delta, margins = calibrate_collar(spec.eps, T)
    gen = FamilyDisjoinHamiltonian(spec, T, delta, slit_steps, push_steps)
    return FamilyDisjoiner(spec, gen, T, delta, margins)
