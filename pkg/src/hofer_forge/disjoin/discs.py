"""Area-preserving isotopies of the plane that push a disc into an annulus.

Stage one slides the unit-area disc off the non-negative x-axis with the
time-independent generator y * rho((pi|z|^2 - 1)/eps).  Stage two pushes
everything away from the cut radially, raising pi|z|^2 at unit speed on a
wedge.  Both stages are glued in time with the flat step so that the
concatenated generator is smooth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from ..core import TWO_PI, IntegratedFlow, SymplecticMapChain, as_points
from ..errors import DisjoinConfigError
from ..flows import FlowConfig, integrate_flow
from ..hamiltonians import Hamiltonian
from .cutoff import DEFAULT_CUTOFF

RHO = DEFAULT_CUTOFF
MIN_COLLAR_MARGIN = 1e-3
# duration scan for the slit stage; 1/sqrt(pi) ~ 0.564 is the unit-disc radius
SCAN_START, SCAN_STOP, SCAN_STEP = 0.58, 1.0, 0.01


# ---------------------------------------------------------------------------
# scalar kernels on a single complex coordinate (arrays broadcast)


def slit_terms(z, eps):
    """Value and complex gradient of y * rho((pi|z|^2 - 1)/eps)."""
    s = (np.pi * np.abs(z) ** 2 - 1.0) / eps
    r = RHO.value(s)
    dr = RHO.derivative(s)
    y = z.imag
    return y * r, 1j * r + y * dr * (TWO_PI / eps) * z


def _plateau(u, width, top):
    """Smooth profile: 0 below 0, 1 on [width, top - width], 0 above top."""
    a, b = u / width, (top - u) / width
    ra, rb = RHO.increasing(a), RHO.increasing(b)
    return ra * rb, (RHO.increasing_derivative(a) * rb - ra * RHO.increasing_derivative(b)) / width


def push_terms(z, t, eps, delta):
    """Value, complex gradient and t-derivative of the annulus push P_t.

    P_t(r e^{i theta}) = -(theta/2pi) rho1(theta) rho2(pi r^2 - t), with
    rho1 vanishing near the cut theta in {0, 2pi} and rho2 supported in
    [0, 1 + eps] of the shifted action.
    """
    z = np.asarray(z, dtype=complex)
    r2 = np.abs(z) ** 2
    theta = np.mod(np.angle(z), TWO_PI)
    rho1, drho1 = _plateau(theta, delta, TWO_PI)
    rho2, drho2 = _plateau(np.pi * r2 - t, delta, 1.0 + eps)
    f = theta * rho1
    df = rho1 + theta * drho1
    value = -(f * rho2) / TWO_PI
    safe = np.where(r2 > 0, r2, 1.0)
    grad_theta = np.where(r2 > 0, 1j * z / safe, 0.0)
    grad = -(df * rho2 * grad_theta + f * drho2 * TWO_PI * z) / TWO_PI
    dt = f * drho2 / TWO_PI
    return value, grad, dt


def disc_terms(tau, z, A, eps, delta, T):
    """Value, gradient and A-derivative of the disc disjoiner generator at tau."""
    z = np.asarray(z, dtype=complex)
    if tau <= 0.5:
        w = 2.0 * T * RHO.increasing_derivative(2.0 * tau)
        if w == 0.0:
            zero = np.zeros(z.shape)
            return zero, np.zeros(z.shape, complex), zero
        v, g = slit_terms(z, eps)
        return w * v, w * g, np.zeros(z.shape)
    sigma = 2.0 * tau - 1.0
    dr = RHO.increasing_derivative(sigma)
    if dr == 0.0:
        zero = np.zeros(z.shape)
        return zero, np.zeros(z.shape, complex), zero
    r = RHO.increasing(sigma)
    A = np.asarray(A, dtype=float)
    v, g, dt = push_terms(z, A * r, eps, delta)
    value = 2.0 * A * dr * v
    grad = 2.0 * A * dr * g
    d_a = 2.0 * dr * v + 2.0 * A * dr * r * dt
    return value, grad, d_a


# ---------------------------------------------------------------------------
# Hamiltonians


class _SingleCoordinate(Hamiltonian):
    def __init__(self, index: int, n: int):
        self.index = index
        self.n = n

    def _coord(self, z):
        return as_points(z, self.n)[..., self.index]

    def _embed(self, z, g):
        out = np.zeros(as_points(z, self.n).shape, complex)
        out[..., self.index] = g
        return out


class SlitDiscHamiltonian(_SingleCoordinate):
    def __init__(self, eps: float, index: int = 0, n: int = 1):
        super().__init__(index, n)
        self.eps = eps

    def value(self, t, z):
        return slit_terms(self._coord(z), self.eps)[0]

    def gradient(self, t, z):
        return self._embed(z, slit_terms(self._coord(z), self.eps)[1])


class AnnulusPushHamiltonian(_SingleCoordinate):
    def __init__(self, eps: float, delta: float, index: int = 0, n: int = 1):
        super().__init__(index, n)
        self.eps = eps
        self.delta = delta

    def value(self, t, z):
        return push_terms(self._coord(z), t, self.eps, self.delta)[0]

    def gradient(self, t, z):
        return self._embed(z, push_terms(self._coord(z), t, self.eps, self.delta)[1])


class DiscDisjoinHamiltonian(_SingleCoordinate):
    def __init__(self, A, eps, delta, T, index=0, n=1):
        super().__init__(index, n)
        self.A, self.eps, self.delta, self.T = A, eps, delta, T

    def value(self, tau, z):
        return disc_terms(tau, self._coord(z), self.A, self.eps, self.delta, self.T)[0]

    def gradient(self, tau, z):
        return self._embed(z, disc_terms(tau, self._coord(z), self.A, self.eps, self.delta, self.T)[1])


class _CompiledSlitStage(SlitDiscHamiltonian):
    """Slit generator whose flow runs in the compiled RK4 kernel with a fixed step count."""

    def __init__(self, eps: float, steps: int):
        super().__init__(eps)
        self.steps = steps

    def flow(self, t0, t1, z):
        from . import kernels

        z = as_points(z, 1)
        return kernels.slit_flow(z[..., 0], t1 - t0, self.steps, self.eps).reshape(z.shape)


class _CompiledPushStage(AnnulusPushHamiltonian):
    def __init__(self, eps: float, delta: float, steps: int):
        super().__init__(eps, delta)
        self.steps = steps

    def flow(self, t0, t1, z):
        from . import kernels

        z = as_points(z, 1)
        return kernels.push_flow(z[..., 0], t0, t1, 1.0, self.steps, self.eps, self.delta).reshape(z.shape)


def slit_disc_generator(eps: float) -> SlitDiscHamiltonian:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return SlitDiscHamiltonian(eps)


def annulus_push_generator(eps: float, delta: float) -> AnnulusPushHamiltonian:
    """Time-dependent push; evaluate at time t with ``.value(t, z)``."""
    if not 0.0 < delta < eps < 1.0:
        raise ValueError(f"need 0 < delta < eps < 1, got delta={delta}, eps={eps}")
    return AnnulusPushHamiltonian(eps, delta)


# ---------------------------------------------------------------------------
# collar calibration and the assembled disjoiner


def _unit_disc_probe(boundary: int, interior: int) -> np.ndarray:
    r0 = 1.0 / math.sqrt(math.pi)
    theta = np.linspace(0.0, TWO_PI, boundary, endpoint=False)
    ring = r0 * np.exp(1j * theta)
    # sunflower layout fills the disc evenly and deterministically
    i = np.arange(interior) + 0.5
    golden = math.pi * (3.0 - math.sqrt(5.0))
    fill = r0 * np.sqrt(i / interior) * np.exp(1j * golden * i)
    return np.concatenate([ring, fill])


def _margins(image, eps):
    action = np.pi * np.abs(image) ** 2
    theta = np.mod(np.angle(image), TWO_PI)
    return {
        "min_action": float(action.min()),
        "outer_gap": float(1.0 + eps - action.max()),
        "min_angle": float(np.minimum(theta, TWO_PI - theta).min()),
    }


@lru_cache(maxsize=32)
def calibrate_collar(eps: float, T: Optional[float] = None, boundary: int = 1500, interior: int = 1500,
                     steps_per_unit: int = 2000):
    """Stage-one duration and collar width read off the stage-one image.

    Returns (T, delta, margins).  ``margins`` holds the smallest action, the
    gap to the outer circle and the smallest angle to the positive x-axis
    over the image of the closed unit-area disc; delta is half the smallest.
    Orbits of the slit generator are periodic, so long durations bring
    points back next to the slit; when T is None the duration is scanned on
    a grid just past the time 1/sqrt(pi) needed to clear the origin and the
    one with the widest margin is kept.
    """
    probe = _unit_disc_probe(boundary, interior)[:, None]
    gen = SlitDiscHamiltonian(eps)
    if T is not None:
        n = max(1, int(math.ceil(steps_per_unit * T)))
        image = integrate_flow(gen, 0.0, T, probe, FlowConfig(steps=n))[:, 0]
        best = (T, _margins(image, eps))
    else:
        grid = np.round(np.arange(SCAN_START, SCAN_STOP + 1e-9, SCAN_STEP), 10)
        z, t, best = probe, 0.0, None
        for target in grid:
            n = max(1, int(math.ceil(steps_per_unit * (target - t))))
            z = integrate_flow(gen, t, float(target), z, FlowConfig(steps=n))
            t = float(target)
            m = _margins(z[:, 0], eps)
            if best is None or min(m.values()) > min(best[1].values()):
                best = (t, m)
    T, margins = best
    margin = min(margins.values())
    if margin < MIN_COLLAR_MARGIN:
        raise DisjoinConfigError(
            f"stage-one image comes within {margin:.3g} of the slit, the origin or the outer circle "
            f"(eps={eps}, T={T}); margins {margins}"
        )
    return T, 0.5 * margin, margins


@dataclass(frozen=True)
class DisjoinSpec:
    """Target annulus inner area A, slack eps, optional collar width and stage-one duration."""

    A: float
    eps: float
    delta: Optional[float] = None
    T: Optional[float] = None

    def __post_init__(self):
        if not self.A >= 0:
            raise ValueError(f"A must be non-negative, got {self.A}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.delta is not None and not 0.0 < self.delta < self.eps:
            raise ValueError(f"delta must lie in (0, eps), got {self.delta}")
        if self.T is not None and not self.T > 0:
            raise ValueError(f"stage-one duration must be positive, got {self.T}")


@dataclass(frozen=True)
class DiscDisjoiner:
    """b_tau for tau in [0, 1]; call with tau to get a map chain.

    ``generator`` is the time-dependent Hamiltonian of the whole isotopy.
    The chain integrates the two stages in their own clocks instead: the
    slit flow for time T * rho~(2 tau) and the push from 0 to
    A * rho~(2 tau - 1), which is the same map with better-conditioned
    steps.
    """

    spec: DisjoinSpec
    T: float
    delta: float
    generator: DiscDisjoinHamiltonian
    slit_steps: int = 8000
    push_steps: int = 500
    margins: dict = field(default_factory=dict)

    def stage_times(self, tau: float):
        slit = self.T * float(RHO.increasing(2.0 * min(tau, 0.5)))
        push = self.spec.A * float(RHO.increasing(2.0 * tau - 1.0)) if tau > 0.5 else 0.0
        return slit, push

    def __call__(self, tau: float) -> SymplecticMapChain:
        if not 0.0 <= tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {tau}")
        slit, push = self.stage_times(tau)
        prims = []
        if slit > 0:
            n = max(1, math.ceil(self.slit_steps * slit / self.T))
            prims.append(IntegratedFlow(_CompiledSlitStage(self.spec.eps, n), 0.0, slit, n))
        if push > 0:
            n = max(1, math.ceil(self.push_steps * push / max(self.spec.A, 1e-300)))
            prims.append(IntegratedFlow(_CompiledPushStage(self.spec.eps, self.delta, n), 0.0, push, n))
        return SymplecticMapChain(tuple(prims))

    def apply(self, z, tau: float = 1.0) -> np.ndarray:
        return self(tau).apply(z)


def disc_disjoiner(spec: DisjoinSpec, slit_steps: int = 8000, push_steps: int = 500) -> DiscDisjoiner:
    """Isotopy carrying {pi|z|^2 <= 1} into {A < pi|z|^2 < 1 + A + eps}."""
    T, delta, margins = calibrate_collar(spec.eps, spec.T)
    if spec.delta is not None:
        if spec.delta > delta:
            raise DisjoinConfigError(
                f"collar width {spec.delta} exceeds half the stage-one margin ({delta:.4g}); margins {margins}"
            )
        delta = spec.delta
    gen = DiscDisjoinHamiltonian(spec.A, spec.eps, delta, T)
    return DiscDisjoiner(spec, T, delta, gen, slit_steps, push_steps, margins)
