"""Deformations of a circle action near an isolated maximum.

On one coordinate with weight k the loop phi_{kt} is deformed to

    phi_t o b_{l_{k-1}} o phi_t o ... o b_{l_1} o phi_t o b_{-(l_1 + ... + l_{k-1})}

with b_l(z) = z + l and phi_t(z) = exp(-2 pi i t) z.  Writing c_m for the
tail sums l_m + ... + l_{k-1} (c_k = 0) the loop is the product of the k
conjugated rotations b_{c_m} phi_t b_{-c_m}, innermost m = 1, and its
generator is folded from conjugation and composition.

Slices use the convention of ``QuadraticSlice``: c + q pi|z|^2 + 2 Re(conj(l) z).
Because every translation offset is linear in the parameters, the slice of the
deformation scaled by r is (r^2 c, r l, q), which the cutoff construction uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .calculus import (
    DEFAULT_T_NODES,
    LoopGenerator,
    compose_generators,
    conjugate,
    simpson,
    simpson_weights,
)
from .core import (
    TWO_PI,
    EllipsoidModel,
    Rotation,
    SymplecticMapChain,
    Translation,
    WeightVector,
    as_points,
)
from .disjoin.cutoff import DEFAULT_CUTOFF
from .errors import DConditionError, DomainError
from .hamiltonians import Hamiltonian, QuadraticAffine, QuadraticSlice

HESSIAN_STEP = 1e-3
D_MARGIN = 2.0


def _weights(weights) -> WeightVector:
    return weights if isinstance(weights, WeightVector) else WeightVector(tuple(weights))


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class DeformationParams:
    """One complex block of length k_j - 1 per coordinate."""

    weights: WeightVector
    blocks: tuple

    def __post_init__(self):
        w = _weights(self.weights)
        object.__setattr__(self, "weights", w)
        blocks = tuple(np.asarray(b, dtype=complex).reshape(-1) for b in self.blocks)
        if len(blocks) != len(w):
            raise DomainError(f"{len(blocks)} parameter blocks for {len(w)} coordinates")
        for j, (k, b) in enumerate(zip(w, blocks)):
            if b.size != k - 1:
                raise DomainError(f"block {j} has {b.size} entries, weight {k} needs {k - 1}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def zeros(cls, weights) -> "DeformationParams":
        w = _weights(weights)
        return cls(w, tuple(np.zeros(k - 1, complex) for k in w))

    @classmethod
    def from_real(cls, weights, vector) -> "DeformationParams":
        """Inverse of ``to_real``: (Re l_1, Im l_1, Re l_2, ...) block by block."""
        w = _weights(weights)
        v = np.asarray(vector, dtype=float).reshape(-1)
        dim = sum(2 * (k - 1) for k in w)
        if v.size != dim:
            raise DomainError(f"expected {dim} real parameters, got {v.size}")
        blocks, pos = [], 0
        for k in w:
            m = 2 * (k - 1)
            blocks.append(v[pos:pos + m:2] + 1j * v[pos + 1:pos + m:2])
            pos += m
        return cls(w, tuple(blocks))

    @property
    def dimension(self) -> int:
        return sum(2 * b.size for b in self.blocks)

    def to_real(self) -> np.ndarray:
        parts = [np.column_stack([b.real, b.imag]).reshape(-1) for b in self.blocks]
        return np.concatenate(parts) if parts else np.zeros(0)

    def scaled(self, r: float) -> "DeformationParams":
        return DeformationParams(self.weights, tuple(r * b for b in self.blocks))

    def norm(self) -> float:
        return float(np.linalg.norm(self.to_real()))

    @property
    def is_zero(self) -> bool:
        return not any(np.any(b != 0) for b in self.blocks)

    def labels(self) -> list:
        """Names of the real parameters, e.g. 'z0.l1.re'."""
        out = []
        for j, b in enumerate(self.blocks):
            for i in range(b.size):
                out += [f"z{j}.l{i + 1}.re", f"z{j}.l{i + 1}.im"]
        return out


# ---------------------------------------------------------------------------
# one block


def _tails(lam: np.ndarray) -> np.ndarray:
    """c_m = l_m + ... + l_{k-1} for m = 1..k, with c_k = 0."""
    return np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])


def _factor_chain(c: complex, t: float, index: int = 0) -> SymplecticMapChain:
    """b_c phi_t b_{-c} on coordinate ``index``."""
    return SymplecticMapChain((Translation(index, -c), Rotation(index, 1.0, t), Translation(index, c)))


def block_loop_chain(k: int, lam, t: float, index: int = 0) -> SymplecticMapChain:
    """The deformed loop at time t as an explicit map chain."""
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    chain = SymplecticMapChain()
    for c in _tails(lam):
        chain = chain.then(_factor_chain(complex(c), t, index))
    return chain


def single_block_generator(k: int, lam) -> QuadraticAffine:
    """Generator on C of the deformed loop; equals -k pi |z|^2 at lam = 0."""
    if k < 2:
        raise DomainError(f"a deformation block needs weight k >= 2, got {k}")
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    if lam.size != k - 1:
        raise DomainError(f"weight {k} takes {k - 1} parameters, got {lam.size}")
    H = QuadraticAffine.circle_action((1,))
    tails = _tails(lam)
    G: Hamiltonian = conjugate(H, Translation(0, complex(tails[0])))
    for c in tails[1:]:
        c = complex(c)
        G = compose_generators(conjugate(H, Translation(0, c)), G, lambda t, c=c: _factor_chain(c, t))
    folded = G
    return QuadraticAffine(lambda t: folded.quadratic_slice(t))


@dataclass(frozen=True)
class MinimizerResult:
    """Completed square of f(x, y) = K(x^2 + y^2) - 2x bx - 2y by + rest."""

    argmin: complex
    value: float
    bx: float
    by: float
    rest: float
    k: float


def minimize_quadratic(s: QuadraticSlice, coordinate: int = 0) -> MinimizerResult:
    """Minimum over C of -(1/pi) times the slice, in closed form."""
    K = -float(s.quad[coordinate])
    if not K > 0:
        raise DomainError(f"quadratic part of -(1/pi) H is not positive definite (coefficient {K})")
    l = complex(s.linear[coordinate])
    bx, by = l.real / math.pi, l.imag / math.pi
    rest = -s.constant / math.pi
    value = rest - (bx * bx + by * by) / K
    return MinimizerResult(complex(bx, by) / K, value, bx, by, rest, K)


def block_minima(k: int, lam, t_nodes: int = DEFAULT_T_NODES) -> tuple:
    ts = np.linspace(0.0, 1.0, t_nodes)
    G = single_block_generator(k, lam)
    return ts, np.array([minimize_quadratic(G.quadratic_slice(t)).value for t in ts])


def block_length(k: int, lam, t_nodes: int = DEFAULT_T_NODES) -> float:
    """int_0^1 (min over z of -(1/pi) H_t) dt by composite Simpson."""
    simpson_weights(t_nodes)
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    if not np.any(lam):
        return 0.0
    return simpson(block_minima(k, lam, t_nodes)[1])


def block_coefficients(k: int) -> np.ndarray:
    """Quadratic-form coefficient j(1 - j/k) of |l_j|^2, j = 1..k-1."""
    j = np.arange(1, k)
    return j * (1.0 - j / k)


# ---------------------------------------------------------------------------
# all coordinates


class DeformationGenerator(QuadraticAffine):
    """Sum over coordinates of the block generators (weight 1 stays -pi|z|^2)."""

    def __init__(self, params: DeformationParams):
        self.params = params
        k = params.weights
        self._blocks = [single_block_generator(kj, b) if kj >= 2 else None for kj, b in zip(k, params.blocks)]
        super().__init__(self._slice)

    def _slice(self, t: float) -> QuadraticSlice:
        n = len(self.params.weights)
        c, lin, quad = 0.0, np.zeros(n, complex), np.zeros(n)
        for j, blk in enumerate(self._blocks):
            if blk is None:
                quad[j] = -1.0
                continue
            s = blk.quadratic_slice(t)
            c += s.constant
            lin[j] = s.linear[0]
            quad[j] = s.quad[0]
        return QuadraticSlice(c, lin, quad)

    def loop_chain(self, t: float) -> SymplecticMapChain:
        chain = SymplecticMapChain()
        for j, (kj, b) in enumerate(zip(self.params.weights, self.params.blocks)):
            if kj >= 2:
                chain = chain.then(block_loop_chain(kj, b, t, j))
            else:
                chain = chain.then(SymplecticMapChain((Rotation(j, 1.0, t),)))
        return chain


def deformation_generator(params: DeformationParams) -> DeformationGenerator:
    return DeformationGenerator(params)


def total_length(params: DeformationParams, t_nodes: int = DEFAULT_T_NODES) -> float:
    """Sum of block lengths; the length functional on C^n up to the factor -pi."""
    return float(sum(block_length(k, b, t_nodes) for k, b in zip(params.weights, params.blocks) if k >= 2))


# ---------------------------------------------------------------------------
# Hessian at the origin


@dataclass(frozen=True)
class HessianReport:
    weights: WeightVector
    labels: list
    numeric: np.ndarray
    analytic: np.ndarray
    coefficients: np.ndarray
    max_deviation: float
    max_relative_deviation: float
    asymmetry: float
    cross_block: float
    step: float

    @property
    def numeric_coefficients(self) -> np.ndarray:
        """Half the numeric diagonal, comparable to ``coefficients``."""
        return 0.5 * np.diag(self.numeric)


def _fd_hessian(fn, dim: int, h: float) -> np.ndarray:
    f0 = fn(np.zeros(dim))
    A = np.zeros((dim, dim))
    e = np.eye(dim)
    for i in range(dim):
        A[i, i] = (fn(h * e[i]) - 2.0 * f0 + fn(-h * e[i])) / (h * h)
        for j in range(i + 1, dim):
            A[i, j] = (fn(h * (e[i] + e[j])) - fn(h * (e[i] - e[j]))
                       - fn(h * (e[j] - e[i])) + fn(-h * (e[i] + e[j]))) / (4.0 * h * h)
            A[j, i] = A[i, j]
    return A


def richardson_hessian(fn, dim: int, h: float = HESSIAN_STEP) -> np.ndarray:
    """Central-difference Hessian at 0 combined over steps h and h/2."""
    if not (h > 0 and h * h > np.finfo(float).tiny * 1e8):
        raise DomainError(f"finite-difference step {h} underflows")
    return (4.0 * _fd_hessian(fn, dim, 0.5 * h) - _fd_hessian(fn, dim, h)) / 3.0


def hessian_at_origin(weights, h: float = HESSIAN_STEP, t_nodes: int = DEFAULT_T_NODES) -> HessianReport:
    """Numeric Hessian of the total block length at 0 against 2 j(1 - j/k)."""
    w = _weights(weights)
    zero = DeformationParams.zeros(w)
    dim = zero.dimension
    coeffs = np.concatenate([np.repeat(block_coefficients(k), 2) for k in w if k >= 2]) if dim else np.zeros(0)
    analytic = np.diag(2.0 * coeffs)
    labels = zero.labels()
    if dim == 0:
        empty = np.zeros((0, 0))
        return HessianReport(w, labels, empty, empty, coeffs, 0.0, 0.0, 0.0, 0.0, h)
    numeric = richardson_hessian(lambda v: total_length(DeformationParams.from_real(w, v), t_nodes), dim, h)
    dev = np.abs(numeric - analytic)
    diag = np.diag(analytic)
    rel = float(np.max(np.abs(np.diag(numeric) - diag) / diag))
    owner = np.concatenate([[j] * 2 * (k - 1) for j, k in enumerate(w) if k >= 2])
    cross = owner[:, None] != owner[None, :]
    return HessianReport(
        w, labels, numeric, analytic, coeffs,
        float(dev.max()), rel, float(np.max(np.abs(numeric - numeric.T))),
        float(np.max(np.abs(numeric[cross]), initial=0.0)), h,
    )


# ---------------------------------------------------------------------------
# D-neighbourhood and the embedded loop


def _slice_stats(params: DeformationParams, ts) -> tuple:
    """Per t: constant c(t) and S(t) = sum |l_j|^2 / (pi k_j)."""
    G = deformation_generator(params)
    k = params.weights.as_array()
    c = np.empty(len(ts))
    S = np.empty(len(ts))
    for i, t in enumerate(ts):
        s = G.quadratic_slice(t)
        c[i] = s.constant
        S[i] = float(np.sum(np.abs(s.linear) ** 2 / (math.pi * k)))
    return c, S


@dataclass(frozen=True)
class DConditionReport:
    """Worst case over t of the three smallness conditions; positive margin = holds.

    argmax:  eps_bar/4 - max_t N(argmax)
    maximum: max_t value + eps_bar/4 (min over t)
    shell:   -eps_bar/4 - max over t, nu in [0, 1] and eps_bar/2 <= N <= eps_bar
    """

    argmax: float
    maximum: float
    shell: float

    @property
    def holds(self) -> bool:
        return self.argmax >= 0 and self.maximum > 0 and self.shell >= 0

    def failed(self) -> list:
        names = []
        if self.argmax < 0:
            names.append("argmax outside {N <= eps_bar/4}")
        if not self.maximum > 0:
            names.append("maximum not above -eps_bar/4")
        if self.shell < 0:
            names.append("shell value above -eps_bar/4")
        return names


def check_d_conditions(params: DeformationParams, eps_bar: float, t_nodes: int = 65,
                       nu_nodes: int = 101) -> DConditionReport:
    """The three conditions in closed form on a t grid.

    On the level N = m the quadratic part is -m and max Re(conj(l) z) is
    sqrt(m S), so for the deformation scaled by nu the shell maximum is
    max over m of nu^2 c - m + 2 nu sqrt(m S).
    """
    ts = np.linspace(0.0, 1.0, t_nodes)
    c, S = _slice_stats(params, ts)
    argmax = eps_bar / 4.0 - float(np.max(S))
    maximum = float(np.min(c + S)) + eps_bar / 4.0
    nu = np.linspace(0.0, 1.0, nu_nodes)[:, None]
    lo, hi = 0.5 * eps_bar, eps_bar
    root = np.clip(nu * np.sqrt(S)[None, :], math.sqrt(lo), math.sqrt(hi))
    shell_max = nu ** 2 * c[None, :] - root ** 2 + 2.0 * nu * root * np.sqrt(S)[None, :]
    shell = -eps_bar / 4.0 - float(np.max(shell_max))
    return DConditionReport(argmax, maximum, shell)


def d_radius(direction: DeformationParams, eps_bar: float, margin: float = D_MARGIN, iters: int = 60,
             t_nodes: int = 65) -> float:
    """Largest r with the conditions holding at margin * r along the unit direction."""
    norm = direction.norm()
    if norm == 0:
        return math.inf
    unit = direction.scaled(1.0 / norm)

    def ok(r):
        return check_d_conditions(unit.scaled(margin * r), eps_bar, t_nodes).holds

    hi = eps_bar
    while ok(hi):
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


class EmbeddedGenerator(Hamiltonian):
    """h_max + H^{(r lam)}_t(z) with r = rho((N - eps_bar/2) / (eps_bar/2)).

    Equal to the deformation where N <= eps_bar/2 and to h_max - N where
    N >= eps_bar.
    """

    def __init__(self, model: EllipsoidModel, params: DeformationParams, eps_bar: float):
        self.model = model
        self.params = params
        self.eps_bar = eps_bar
        self.n = model.n
        self.deformation = deformation_generator(params)
        self._k = model.weights.as_array()

    def cutoff(self, z):
        N = self.model.norm_function(z)
        half = 0.5 * self.eps_bar
        s = (N - half) / half
        return np.asarray(DEFAULT_CUTOFF.value(s)), np.asarray(DEFAULT_CUTOFF.derivative(s)) / half, N

    def value(self, t, z):
        z = as_points(z, self.n)
        s = self.deformation.quadratic_slice(t)
        r, _, N = self.cutoff(z)
        lin = 2.0 * np.sum((np.conj(s.linear) * z).real, axis=-1)
        return self.model.h_max + r * r * s.constant - N + r * lin

    def gradient(self, t, z):
        z = as_points(z, self.n)
        s = self.deformation.quadratic_slice(t)
        r, dr, _ = self.cutoff(z)
        lin = 2.0 * np.sum((np.conj(s.linear) * z).real, axis=-1)
        dN = TWO_PI * self._k * z
        outer = (2.0 * r * s.constant + lin) * dr
        return -dN + r[..., None] * 2.0 * s.linear + outer[..., None] * dN


@dataclass
class EmbeddedExtremizer:
    """Per-t extrema of an embedded generator over the closed model.

    The maximum is found by BFGS on the generator itself, started at the
    origin; the minimum is h_max - alpha on the model boundary, after a
    check that the cutoff region stays above it.
    """

    gtol: float = 1e-12

    def _max_at(self, G: EmbeddedGenerator, t: float) -> float:
        n = G.n

        def f(x):
            z = (x[:n] + 1j * x[n:])[None, :]
            return -float(G.value(t, z)[0])

        def jac(x):
            z = (x[:n] + 1j * x[n:])[None, :]
            g = -G.gradient(t, z)[0]
            return np.concatenate([g.real, g.imag])

        res = minimize(f, np.zeros(2 * n), jac=jac, method="BFGS", options={"gtol": self.gtol})
        return -float(res.fun)

    def extrema(self, generator, ts, domain):
        if not isinstance(generator, EmbeddedGenerator):
            raise DomainError("EmbeddedExtremizer only handles embedded deformation generators")
        mx = np.array([self._max_at(generator, float(t)) for t in ts])
        floor = domain.h_max - domain.alpha
        c, S = _slice_stats(generator.params, ts)
        # lowest value on {N <= eps_bar}: min over m, nu of nu^2 c - m - 2 nu sqrt(m S)
        eb = generator.eps_bar
        nu = np.linspace(0.0, 1.0, 101)[:, None]
        inner = np.min(np.minimum(0.0, nu ** 2 * c) - eb - 2.0 * nu * np.sqrt(eb * S))
        if domain.h_max + inner < floor:
            raise DomainError("cutoff region dips below the model boundary value")
        return mx, np.full(len(ts), floor)


def embed_deformation(model: EllipsoidModel, params: DeformationParams, eps_bar: Optional[float] = None,
                      check: bool = True) -> LoopGenerator:
    """Loop on the model generated by the cut-off deformation."""
    if tuple(params.weights) != tuple(model.weights):
        raise DomainError(f"parameters for weights {tuple(params.weights)} on a model with {tuple(model.weights)}")
    eps_bar = 0.25 * model.alpha if eps_bar is None else float(eps_bar)
    if not 0 < eps_bar < model.alpha:
        raise DomainError(f"eps_bar must lie in (0, alpha), got {eps_bar}")
    if check and not params.is_zero:
        rep = check_d_conditions(params, eps_bar)
        if not rep.holds:
            raise DConditionError("; ".join(rep.failed()) + f" (margins {rep})", rep.failed())
    return LoopGenerator(EmbeddedGenerator(model, params, eps_bar), model, EmbeddedExtremizer())


def embedded_length(model: EllipsoidModel, params: DeformationParams, eps_bar: Optional[float] = None,
                    t_nodes: int = 65) -> float:
    """ell_plus of the embedded loop with numerically maximized slices."""
    from .calculus import hofer_length

    return hofer_length(embed_deformation(model, params, eps_bar), t_nodes, estimate_error=False).ell_plus


def embedded_hessian(model: EllipsoidModel, h: float = HESSIAN_STEP, eps_bar: Optional[float] = None,
                     t_nodes: int = 65) -> np.ndarray:
    """Richardson central-difference Hessian of ell_plus at lam = 0.

    65 nodes integrate every oscillatory term exactly, since the
    frequencies are integers below k.
    """
    w = model.weights
    dim = DeformationParams.zeros(w).dimension
    return richardson_hessian(lambda v: embedded_length(model, DeformationParams.from_real(w, v), eps_bar, t_nodes),
                              dim, h)


@dataclass(frozen=True)
class ClosureByRegion:
    """Time-1 residuals split by where the undeformed start point lies.

    core: points whose orbit under the uncut loop stays in N <= eps_bar/2
    outside: N >= eps_bar
    transition: everything else
    """

    core: float
    transition: float
    outside: float
    counts: dict


def embedded_closure(loop: LoopGenerator, points, steps: int = 10_000, orbit_nodes: int = 129) -> ClosureByRegion:
    from .flows import FlowConfig, integrate_flow

    G = loop.generator
    if not isinstance(G, EmbeddedGenerator):
        raise DomainError("expected an embedded deformation loop")
    z = as_points(points, G.n)
    model, eb = G.model, G.eps_bar
    N0 = model.norm_function(z)
    orbit_max = np.zeros(z.shape[0])
    for t in np.linspace(0.0, 1.0, orbit_nodes):
        orbit_max = np.maximum(orbit_max, model.norm_function(G.deformation.loop_chain(t).apply(z)))
    image = integrate_flow(G, 0.0, 1.0, z, FlowConfig(steps=steps))
    res = np.max(np.abs(image - z), axis=-1)
    core = orbit_max <= 0.5 * eb
    outside = N0 >= eb
    trans = ~core & ~outside

    def worst(mask):
        return float(res[mask].max()) if mask.any() else 0.0

    return ClosureByRegion(worst(core), worst(trans), worst(outside),
                           {"core": int(core.sum()), "transition": int(trans.sum()), "outside": int(outside.sum())})
