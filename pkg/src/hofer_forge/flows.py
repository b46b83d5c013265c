"""Integration of Hamiltonian vector fields and symplecticity audits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    IntegratedFlow,
    SymplecticMapChain,
    as_chain,
    as_points,
    standard_symplectic_matrix,
    to_complex,
    to_real,
)
from .errors import FlowBlowUpError

METHODS = ("rk4", "implicit-midpoint")


@dataclass(frozen=True)
class FlowConfig:
    method: str = "rk4"
    steps: int = 1000
    tol: float = 1e-5
    # fixed-point iterations per implicit-midpoint step
    max_iter: int = 50
    # use a generator's own ``flow(t0, t1, z)`` when it provides one
    structured: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}; choose from {METHODS}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"step count must be a positive integer, got {self.steps}")
        if not self.tol > 0:
            raise ValueError("symplecticity tolerance must be positive")
        object.__setattr__(self, "steps", int(self.steps))


def complex_field(H, t: float, z: np.ndarray) -> np.ndarray:
    """X = i * grad H, i.e. xdot = -dH/dy, ydot = dH/dx."""
    x = 1j * H.gradient(t, z)
    if not np.all(np.isfinite(x)):
        raise FlowBlowUpError(f"non-finite Hamiltonian derivative at t={t}", time=t)
    return x


def hamiltonian_vector_field(H, t: float, p) -> np.ndarray:
    """Field of H at p as 2n reals (xdot_1, ydot_1, ...)."""
    return to_real(complex_field(H, t, as_points(p, H.n)))


def _rk4(H, t0, t1, z, steps):
    h = (t1 - t0) / steps
    t = t0
    for i in range(steps):
        k1 = complex_field(H, t, z)
        k2 = complex_field(H, t + 0.5 * h, z + 0.5 * h * k1)
        k3 = complex_field(H, t + 0.5 * h, z + 0.5 * h * k2)
        k4 = complex_field(H, t + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (i + 1) * h
        if not np.all(np.isfinite(z)):
            raise FlowBlowUpError(f"flow state became non-finite at t={t:.6g}", time=t)
    return z


def _implicit_midpoint(H, t0, t1, z, steps, max_iter):
    h = (t1 - t0) / steps
    for i in range(steps):
        tm = t0 + (i + 0.5) * h
        nxt = z + h * complex_field(H, tm, z)
        for _ in range(max_iter):
            prev = nxt
            nxt = z + h * complex_field(H, tm, 0.5 * (z + nxt))
            if np.max(np.abs(nxt - prev), initial=0.0) < 1e-14 * max(1.0, np.max(np.abs(nxt), initial=0.0)):
                break
        z = nxt
        if not np.all(np.isfinite(z)):
            t = t0 + (i + 1) * h
            raise FlowBlowUpError(f"flow state became non-finite at t={t:.6g}", time=t)
    return z


def integrate_flow(H, t0: float, t1: float, p, config: FlowConfig | None = None) -> np.ndarray:
    """Image of p at time t1 under the flow of H started at time t0."""
    config = config or FlowConfig()
    z = as_points(p, H.n).copy()
    if t1 == t0:
        return z
    structured = getattr(H, "flow", None)
    if config.structured and structured is not None:
        z = structured(float(t0), float(t1), z)
        if not np.all(np.isfinite(z)):
            raise FlowBlowUpError("structured flow produced a non-finite state", time=t1)
        return z
    if config.method == "rk4":
        return _rk4(H, float(t0), float(t1), z, config.steps)
    return _implicit_midpoint(H, float(t0), float(t1), z, config.steps, config.max_iter)


def flow_chain(H, t0: float, t1: float, config: FlowConfig | None = None) -> SymplecticMapChain:
    config = config or FlowConfig()
    return SymplecticMapChain((IntegratedFlow(H, t0, t1, config.steps, config.method),))


def _as_map(mapping):
    if callable(mapping) and not isinstance(mapping, (SymplecticMapChain, IntegratedFlow)):
        return mapping
    return as_chain(mapping).apply


def jacobian(mapping, points, fd_step: float = 1e-6, richardson: bool = True) -> np.ndarray:
    """Real (2n x 2n) Jacobians by central differences, batched over points.

    With ``richardson`` the steps h and h/2 are combined as (4 D(h/2) - D(h)) / 3,
    which removes the O(h^2) term; strongly sheared maps need it.
    """
    if richardson:
        coarse = jacobian(mapping, points, fd_step, False)
        fine = jacobian(mapping, points, 0.5 * fd_step, False)
        return (4.0 * fine - coarse) / 3.0
    fn = _as_map(mapping)
    z = as_points(points)
    z = z.reshape(-1, z.shape[-1])
    m, n = z.shape
    x = to_real(z)
    h = fd_step * np.maximum(1.0, np.abs(x))
    probes = np.empty((2, 2 * n, m, 2 * n))
    for c in range(2 * n):
        for s, sign in enumerate((1.0, -1.0)):
            xp = x.copy()
            xp[:, c] += sign * h[:, c]
            probes[s, c] = xp
    images = to_real(fn(to_complex(probes.reshape(-1, 2 * n)))).reshape(2, 2 * n, m, 2 * n)
    jac = (images[0] - images[1]) / (2.0 * h.T[:, :, None])
    # jac[c, sample, row] -> (sample, row, c)
    return np.transpose(jac, (1, 2, 0))


def audit_symplectic(mapping, samples, fd_step: float = 1e-6, richardson: bool = True) -> float:
    """max over samples of ||J^T J0 J - J0||_inf (max absolute entry)."""
    jac = jacobian(mapping, samples, fd_step, richardson)
    n2 = jac.shape[-1]
    j0 = standard_symplectic_matrix(n2 // 2)
    defect = np.einsum("sji,jk,skl->sil", jac, j0, jac) - j0
    return float(np.max(np.abs(defect)))


def sign_self_test(steps: int = 1000, tol: float = 1e-8) -> float:
    """Check that -pi|z|^2 flows by z -> exp(-2 pi i t) z; raise otherwise."""
    from .hamiltonians import QuadraticAffine

    H = QuadraticAffine.constant(0.0, quad=[-1.0])
    t = 0.25
    got = integrate_flow(H, 0.0, t, np.array([1.0 + 0j]), FlowConfig(steps=steps))[0]
    err = abs(got - np.exp(-2j * np.pi * t))
    if err > tol:
        raise AssertionError(f"vector-field sign convention broken: residual {err:.3e}")
    return err


sign_self_test()
