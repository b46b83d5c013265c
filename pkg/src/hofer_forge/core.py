"""Phase-space conventions, symplectic map chains and the ellipsoid model.

Points of C^n are complex numpy arrays whose last axis has length n; any
leading axes are batch axes.  The symplectic form is sum dx_j ^ dy_j, so
pi*|z|^2 is the area of the disc of radius |z|.  A rotation with positive
speed s turns clockwise, z -> exp(-2 pi i s t) z, which is the flow of the
Hamiltonian -s*pi*|z|^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionMismatchError, DomainError, FlowBlowUpError

TWO_PI = 2.0 * np.pi


def as_points(z, n=None) -> np.ndarray:
    """Coerce ``z`` to a complex array of points, checking the dimension."""
    arr = np.asarray(z, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if n is not None and arr.shape[-1] != n:
        raise DimensionMismatchError(f"expected points in C^{n}, got trailing axis {arr.shape[-1]}")
    return arr


def to_real(z) -> np.ndarray:
    """(..., n) complex -> (..., 2n) real laid out as x_1, y_1, x_2, y_2, ..."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def to_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise DimensionMismatchError("real coordinates must come in (x, y) pairs")
    return x[..., 0::2] + 1j * x[..., 1::2]


def standard_symplectic_matrix(n: int) -> np.ndarray:
    """J0 with omega(u, v) = u^T J0 v in the (x_1, y_1, ...) layout."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(n), block)


@dataclass(frozen=True)
class WeightVector:
    """Absolute values k_j of the isotropy weights -k_j at the maximum."""

    k: tuple

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        if not k:
            raise ValueError("weight vector must be nonempty")
        if any(v != w for v, w in zip(k, self.k)) or any(v < 1 for v in k):
            raise ValueError(f"weights must be positive integers, got {self.k!r}")
        object.__setattr__(self, "k", k)

    def __len__(self):
        return len(self.k)

    def __iter__(self):
        return iter(self.k)

    def __getitem__(self, i):
        return self.k[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.k, dtype=float)


@dataclass(frozen=True)
class EllipsoidModel:
    """The chart {N(z) < alpha} with momentum map h_max - N(z)."""

    weights: WeightVector
    alpha: float
    h_max: float = 0.0

    def __post_init__(self):
        if not isinstance(self.weights, WeightVector):
            object.__setattr__(self, "weights", WeightVector(tuple(self.weights)))
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    @property
    def n(self) -> int:
        return len(self.weights)

    def norm_function(self, z) -> np.ndarray:
        """N(z) = pi * sum k_j |z_j|^2."""
        z = as_points(z, self.n)
        return np.pi * np.sum(self.weights.as_array() * np.abs(z) ** 2, axis=-1)

    def momentum(self, z) -> np.ndarray:
        return self.h_max - self.norm_function(z)

    def contains(self, z, closed=True) -> np.ndarray:
        nz = self.norm_function(z)
        return nz <= self.alpha if closed else nz < self.alpha

    def sample(self, rng: np.random.Generator, size: int, fraction: float = 1.0) -> np.ndarray:
        """Volume-uniform samples of {N <= fraction * alpha}.

        Action variables pi|z_j|^2 are uniform on the simplex and the angles
        are uniform, which is Lebesgue measure on C^n.
        """
        u = rng.dirichlet(np.ones(self.n + 1), size=size)[:, : self.n]
        actions = fraction * self.alpha * u / self.weights.as_array()
        theta = rng.uniform(0.0, TWO_PI, size=(size, self.n))
        return np.sqrt(actions / np.pi) * np.exp(1j * theta)


def momentum(model: EllipsoidModel, p) -> np.ndarray:
    """Value h_max - pi * sum k_j |z_j|^2 of the model momentum map."""
    return model.momentum(p)


# ---------------------------------------------------------------------------
# map chains


@dataclass(frozen=True)
class Rotation:
    """z_j -> exp(-2 pi i * speed * time) z_j."""

    index: int
    speed: float
    time: float

    def apply(self, z: np.ndarray) -> np.ndarray:
        out = z.copy()
        out[..., self.index] *= np.exp(-1j * TWO_PI * self.speed * self.time)
        return out

    def inverse(self) -> "Rotation":
        return Rotation(self.index, self.speed, -self.time)


@dataclass(frozen=True)
class Translation:
    """z_j -> z_j + offset."""

    index: int
    offset: complex

    def apply(self, z: np.ndarray) -> np.ndarray:
        out = z.copy()
        out[..., self.index] += self.offset
        return out

    def inverse(self) -> "Translation":
        return Translation(self.index, -complex(self.offset))


@dataclass(frozen=True)
class IntegratedFlow:
    """Flow of ``generator`` from time t0 to t1, integrated numerically."""

    generator: object
    t0: float
    t1: float
    steps: int = 1000
    method: str = "rk4"

    def apply(self, z: np.ndarray) -> np.ndarray:
        from .flows import FlowConfig, integrate_flow

        config = FlowConfig(method=self.method, steps=self.steps)
        return integrate_flow(self.generator, self.t0, self.t1, z, config)

    def inverse(self) -> "IntegratedFlow":
        return IntegratedFlow(self.generator, self.t1, self.t0, self.steps, self.method)


Primitive = Union[Rotation, Translation, IntegratedFlow]


@dataclass(frozen=True)
class SymplecticMapChain:
    """Composition of primitives, applied left to right in stored order.

    ``SymplecticMapChain((p1, p2))`` is the map p2 o p1.
    """

    primitives: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for p in self.primitives:
            if not isinstance(p, (Rotation, Translation, IntegratedFlow)):
                raise TypeError(f"not a chain primitive: {p!r}")

    def __len__(self):
        return len(self.primitives)

    def then(self, other: "SymplecticMapChain") -> "SymplecticMapChain":
        """The chain applying ``self`` first and ``other`` afterwards."""
        return SymplecticMapChain(self.primitives + tuple(other.primitives))

    def apply(self, z) -> np.ndarray:
        return apply_chain(self, z)

    def inverse(self) -> "SymplecticMapChain":
        return invert_chain(self)

    @property
    def is_affine(self) -> bool:
        return all(isinstance(p, (Rotation, Translation)) for p in self.primitives)

    def affine_form(self, n: int):
        """Return (phase, offset) with chain(z) = phase * z + offset.

        Only defined for chains of rotations and translations; returns None
        when the chain contains an integrated flow.
        """
        if not self.is_affine:
            return None
        phase = np.ones(n, dtype=complex)
        offset = np.zeros(n, dtype=complex)
        for p in self.primitives:
            if p.index >= n:
                raise DimensionMismatchError(f"primitive acts on coordinate {p.index} of C^{n}")
            if isinstance(p, Rotation):
                factor = np.exp(-1j * TWO_PI * p.speed * p.time)
                phase[p.index] *= factor
                offset[p.index] *= factor
            else:
                offset[p.index] += p.offset
        return phase, offset


IDENTITY = SymplecticMapChain()

ChainLike = Union[SymplecticMapChain, Sequence[Primitive]]
ChainFamily = Callable[[float], SymplecticMapChain]


def as_chain(chain) -> SymplecticMapChain:
    if isinstance(chain, SymplecticMapChain):
        return chain
    if isinstance(chain, (Rotation, Translation, IntegratedFlow)):
        return SymplecticMapChain((chain,))
    return SymplecticMapChain(tuple(chain))


def apply_chain(chain, p) -> np.ndarray:
    """Image of the point(s) ``p`` under the chain."""
    chain = as_chain(chain)
    z = as_points(p)
    n = z.shape[-1]
    for i, prim in enumerate(chain.primitives):
        if isinstance(prim, (Rotation, Translation)) and prim.index >= n:
            raise DimensionMismatchError(
                f"primitive {i} acts on coordinate {prim.index} but points live in C^{n}"
            )
        try:
            z = prim.apply(z)
        except FlowBlowUpError as exc:
            raise FlowBlowUpError(str(exc), time=exc.time, primitive_index=i) from exc
        if not np.all(np.isfinite(z)):
            raise FlowBlowUpError(f"non-finite state after primitive {i}", primitive_index=i)
    return z


def invert_chain(chain) -> SymplecticMapChain:
    chain = as_chain(chain)
    return SymplecticMapChain(tuple(p.inverse() for p in reversed(chain.primitives)))


def rotation_chain(speeds, t: float) -> SymplecticMapChain:
    """Product rotation z_j -> exp(-2 pi i speeds_j t) z_j."""
    return SymplecticMapChain(tuple(Rotation(j, float(s), t) for j, s in enumerate(speeds) if s != 0))
