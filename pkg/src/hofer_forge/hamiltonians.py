"""Time-dependent Hamiltonians H(t, z) on C^n.

Every Hamiltonian evaluates batched points and returns its complex gradient
``dH/dx + i dH/dy`` per coordinate.  With the convention dH = -iota(X) omega
the Hamiltonian vector field is ``X = 1j * gradient`` in complex notation,
i.e. xdot = -dH/dy and ydot = dH/dx.

Quadratic-affine Hamiltonians, and sums and affine pullbacks of them, expose a
``quadratic_slice(t)`` so that extrema can be computed in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import SymplecticMapChain, as_points, invert_chain
from .errors import DimensionMismatchError

FD_RELATIVE_STEP = 1e-6


@dataclass(frozen=True)
class QuadraticSlice:
    """c + sum_j q_j pi |z_j|^2 + sum_j 2 Re(conj(l_j) z_j) at a fixed time."""

    constant: float
    linear: np.ndarray
    quad: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=complex).reshape(-1))
        object.__setattr__(self, "quad", np.asarray(self.quad, dtype=float).reshape(-1))
        if self.linear.shape != self.quad.shape:
            raise DimensionMismatchError("linear and quadratic parts differ in dimension")

    @property
    def n(self) -> int:
        return self.quad.shape[0]

    @classmethod
    def zero(cls, n: int) -> "QuadraticSlice":
        return cls(0.0, np.zeros(n, complex), np.zeros(n))

    def value(self, z) -> np.ndarray:
        z = as_points(z, self.n)
        return (
            self.constant
            + np.sum(self.quad * np.pi * np.abs(z) ** 2, axis=-1)
            + 2.0 * np.sum((np.conj(self.linear) * z).real, axis=-1)
        )

    def gradient(self, z) -> np.ndarray:
        z = as_points(z, self.n)
        return 2.0 * np.pi * self.quad * z + 2.0 * self.linear

    def __add__(self, other: "QuadraticSlice") -> "QuadraticSlice":
        return QuadraticSlice(self.constant + other.constant, self.linear + other.linear, self.quad + other.quad)

    def scale(self, factor: float) -> "QuadraticSlice":
        return QuadraticSlice(factor * self.constant, factor * self.linear, factor * self.quad)

    def pullback_affine(self, phase, offset) -> "QuadraticSlice":
        """Slice of z -> H(phase * z + offset) for unimodular ``phase``."""
        q, l = self.quad, self.linear
        c = (
            self.constant
            + float(np.sum(q * np.pi * np.abs(offset) ** 2))
            + 2.0 * float(np.sum((np.conj(l) * offset).real))
        )
        return QuadraticSlice(c, np.conj(phase) * (q * np.pi * offset + l), q)


class Hamiltonian:
    """Base class.  Subclasses implement ``value`` and usually ``gradient``."""

    n: Optional[int] = None

    def value(self, t: float, z) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float, z) -> np.ndarray:
        return self.value(t, z)

    def gradient(self, t: float, z) -> np.ndarray:
        return finite_difference_gradient(lambda w: self.value(t, w), z)

    def quadratic_slice(self, t: float) -> Optional[QuadraticSlice]:
        return None

    def __add__(self, other: "Hamiltonian") -> "Sum":
        return Sum((self, other))

    def __mul__(self, factor: float) -> "Scaled":
        return Scaled(self, float(factor))

    __rmul__ = __mul__


def finite_difference_gradient(fn, z, rel_step: float = FD_RELATIVE_STEP) -> np.ndarray:
    """Central-difference complex gradient of a real function of points."""
    z = as_points(z)
    grad = np.zeros_like(z)
    h = rel_step * np.maximum(1.0, np.abs(z))
    for j in range(z.shape[-1]):
        for unit, part in ((1.0, 1.0), (1j, 1j)):
            zp = z.copy()
            zm = z.copy()
            zp[..., j] += unit * h[..., j]
            zm[..., j] -= unit * h[..., j]
            grad[..., j] += part * (fn(zp) - fn(zm)) / (2.0 * h[..., j])
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite finite-difference gradient")
    return grad


class QuadraticAffine(Hamiltonian):
    """Quadratic-affine Hamiltonian with (possibly time-dependent) coefficients.

    ``coefficients`` is either a fixed QuadraticSlice or a callable t -> slice.
    """

    def __init__(self, coefficients):
        self._coefficients = coefficients
        probe = coefficients if isinstance(coefficients, QuadraticSlice) else coefficients(0.0)
        self.n = probe.n

    @classmethod
    def constant(cls, c=0.0, linear=None, quad=None, n=None):
        if n is None:
            n = len(quad) if quad is not None else len(linear) if linear is not None else 1
        linear = np.zeros(n, complex) if linear is None else linear
        quad = np.zeros(n) if quad is None else quad
        return cls(QuadraticSlice(c, linear, quad))

    @classmethod
    def circle_action(cls, weights, h_max: float = 0.0):
        """h_max - sum k_j pi |z_j|^2, generating z_j -> exp(-2 pi i k_j t) z_j."""
        k = np.asarray(list(weights), dtype=float)
        return cls.constant(h_max, np.zeros(len(k), complex), -k)

    def quadratic_slice(self, t: float) -> QuadraticSlice:
        if isinstance(self._coefficients, QuadraticSlice):
            return self._coefficients
        return self._coefficients(t)

    def value(self, t, z):
        return self.quadratic_slice(t).value(z)

    def gradient(self, t, z):
        return self.quadratic_slice(t).gradient(z)


class Sum(Hamiltonian):
    def __init__(self, children):
        self.children = tuple(children)
        dims = {c.n for c in self.children if c.n is not None}
        if len(dims) > 1:
            raise DimensionMismatchError(f"summands live in different dimensions {sorted(dims)}")
        self.n = dims.pop() if dims else None

    def value(self, t, z):
        return sum(c.value(t, z) for c in self.children)

    def gradient(self, t, z):
        return sum(c.gradient(t, z) for c in self.children)

    def quadratic_slice(self, t):
        slices = [c.quadratic_slice(t) for c in self.children]
        if any(s is None for s in slices):
            return None
        total = slices[0]
        for s in slices[1:]:
            total = total + s
        return total


class Scaled(Hamiltonian):
    def __init__(self, child: Hamiltonian, factor: float):
        self.child = child
        self.factor = factor
        self.n = child.n

    def value(self, t, z):
        return self.factor * self.child.value(t, z)

    def gradient(self, t, z):
        return self.factor * self.child.gradient(t, z)

    def quadratic_slice(self, t):
        s = self.child.quadratic_slice(t)
        return None if s is None else s.scale(self.factor)


class Pullback(Hamiltonian):
    """z -> child(t, chain(z)), where ``chain`` may depend on t.

    ``chain`` is a SymplecticMapChain or a callable t -> SymplecticMapChain.
    For chains of rotations and translations the gradient and the quadratic
    slice are exact.  Otherwise the Hamiltonian vector field is the
    push-forward of the child's field by the inverse chain, evaluated with a
    central directional difference.
    """

    def __init__(self, child: Hamiltonian, chain, fd_step: float = 1e-6):
        self.child = child
        self.chain = chain
        self.n = child.n
        self.fd_step = fd_step

    def chain_at(self, t: float) -> SymplecticMapChain:
        return self.chain if isinstance(self.chain, SymplecticMapChain) else self.chain(t)

    def value(self, t, z):
        return self.child.value(t, self.chain_at(t).apply(z))

    def gradient(self, t, z):
        z = as_points(z, self.n)
        chain = self.chain_at(t)
        affine = chain.affine_form(z.shape[-1])
        if affine is not None:
            phase, offset = affine
            return np.conj(phase) * self.child.gradient(t, phase * z + offset)
        w = chain.apply(z)
        field = 1j * self.child.gradient(t, w)
        inverse = invert_chain(chain)
        norm = np.sqrt(np.sum(np.abs(field) ** 2, axis=-1, keepdims=True))
        scale = self.fd_step * np.maximum(1.0, np.max(np.abs(w), axis=-1, keepdims=True))
        eta = np.where(norm > 0, scale / np.where(norm > 0, norm, 1.0), 0.0)
        stacked = np.concatenate([w + eta * field, w - eta * field], axis=0)
        images = inverse.apply(stacked)
        m = w.shape[0] if w.ndim > 1 else 1
        plus = images[:m].reshape(w.shape)
        minus = images[m:].reshape(w.shape)
        safe_eta = np.where(eta > 0, eta, 1.0)
        pushed = np.where(eta > 0, (plus - minus) / (2.0 * safe_eta), 0.0)
        return -1j * pushed

    def quadratic_slice(self, t):
        s = self.child.quadratic_slice(t)
        if s is None:
            return None
        affine = self.chain_at(t).affine_form(s.n)
        if affine is None:
            return None
        return s.pullback_affine(*affine)


class Reparametrized(Hamiltonian):
    """H_{t(tau)} * dt/dtau, the generator of tau -> psi_{t(tau)}."""

    def __init__(self, child: Hamiltonian, time_map: Callable, derivative: Callable):
        self.child = child
        self.time_map = time_map
        self.derivative = derivative
        self.n = child.n

    def value(self, tau, z):
        return self.derivative(tau) * self.child.value(self.time_map(tau), z)

    def gradient(self, tau, z):
        return self.derivative(tau) * self.child.gradient(self.time_map(tau), z)

    def quadratic_slice(self, tau):
        s = self.child.quadratic_slice(self.time_map(tau))
        return None if s is None else s.scale(self.derivative(tau))


class FunctionHamiltonian(Hamiltonian):
    """Wraps a plain function fn(t, z); gradient by central differences unless given."""

    def __init__(self, fn: Callable, n: int, gradient: Optional[Callable] = None):
        self.fn = fn
        self.n = n
        self._gradient = gradient

    def value(self, t, z):
        return self.fn(t, as_points(z, self.n))

    def gradient(self, t, z):
        if self._gradient is not None:
            return self._gradient(t, as_points(z, self.n))
        return super().gradient(t, z)


def zero_hamiltonian(n: int) -> QuadraticAffine:
    return QuadraticAffine(QuadraticSlice.zero(n))
