"""Shortening circle-action loops by disjoining maximum sets.

If K and F generate commuting circle actions and b moves the maximum set of
F off that of K, the loop psi^K_t o (b psi^F_t b^-1) has generator
K + F o b^-1 o (psi^K_t)^-1, whose maximum is strictly below max(K + F).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calculus import (
    DEFAULT_T_NODES,
    HoferReport,
    LoopGenerator,
    compose_generators,
    conjugate,
    hofer_length,
)
from .core import (
    IDENTITY,
    EllipsoidModel,
    Rotation,
    SymplecticMapChain,
    WeightVector,
    as_chain,
    invert_chain,
    rotation_chain,
)
from .disjoin.family import Affine, FamilyDisjoinSpec, family_disjoiner
from .errors import CommutationError, ContainmentError, DomainError, LoopClosureError, SupportLeakError
from .hamiltonians import Hamiltonian, QuadraticAffine, Scaled, Sum
from .parallel import parallel_map

COMMUTATION_TOL = 1e-8
SUPPORT_TOL = 1e-9


# ---------------------------------------------------------------------------
# circle actions


def circle_speeds(H: Hamiltonian, tol: float = 1e-12) -> np.ndarray:
    """Integer speeds k_j if H = c - sum k_j pi|z_j|^2 generates a circle action."""
    s0 = H.quadratic_slice(0.0)
    if s0 is None:
        raise LoopClosureError("generator is not quadratic, so it cannot be checked to be a circle action")
    for t in (0.25, 0.5, 0.75):
        st = H.quadratic_slice(t)
        if not (np.allclose(st.quad, s0.quad, atol=tol) and np.allclose(st.linear, s0.linear, atol=tol)):
            raise LoopClosureError("generator is time-dependent, not a circle action")
    if np.max(np.abs(s0.linear), initial=0.0) > tol:
        raise LoopClosureError("generator has a linear part; its flow does not close up at the origin")
    speeds = -s0.quad
    if np.max(np.abs(speeds - np.round(speeds))) > 1e-9:
        raise LoopClosureError(f"rotation speeds {speeds} are not integers, the time-1 map is not the identity")
    return np.round(speeds)


def circle_flow(H: Hamiltonian) -> Callable[[float], SymplecticMapChain]:
    speeds = circle_speeds(H)
    return lambda t: rotation_chain(speeds, t)


# ---------------------------------------------------------------------------
# loop constructions


def polterovich_loop(H: Hamiltonian, b, domain: EllipsoidModel) -> LoopGenerator:
    """Generator of phi_t b phi_t b^-1, where H generates phi_{2t}.

    ``H / 2`` must generate a circle action phi_t.  The result is
    H/2 + (H/2) o b^-1 o phi_t^-1.
    """
    half = Scaled(H, 0.5)
    flow = circle_flow(half)
    b = as_chain(b)
    if not b.primitives:
        return LoopGenerator(H, domain)
    return LoopGenerator(compose_generators(half, conjugate(half, b), flow), domain)


def poisson_bracket(K: Hamiltonian, F: Hamiltonian, t: float, z) -> np.ndarray:
    """omega(X_K, X_F) = sum_j Im(conj(dK_j) dF_j)."""
    return np.sum((np.conj(K.gradient(t, z)) * F.gradient(t, z)).imag, axis=-1)


def check_commutation(K, F, domain: EllipsoidModel, samples: int = 200, seed: int = 0, tol=COMMUTATION_TOL):
    z = domain.sample(np.random.default_rng(seed), samples)
    worst = float(np.max(np.abs(poisson_bracket(K, F, 0.0, z))))
    if worst > tol:
        raise CommutationError(f"K and F do not Poisson-commute: max |{{K, F}}| = {worst:.3e}")
    return worst


def check_support(b, domain: EllipsoidModel, invariant: Optional[Callable] = None, shell: float = 0.02,
                  samples: int = 200, seed: int = 1, tol: float = SUPPORT_TOL):
    """b must fix the outer shell {N >= (1 - shell) alpha} and preserve ``invariant``."""
    rng = np.random.default_rng(seed)
    z = domain.sample(rng, samples)
    scale = np.sqrt(rng.uniform(1.0 - shell, 1.0, samples) * domain.alpha / np.maximum(domain.norm_function(z), 1e-300))
    z = z * scale[:, None]
    moved = float(np.max(np.abs(as_chain(b).apply(z) - z)))
    if moved > tol:
        raise SupportLeakError(f"disjoining map moves points of the outer shell by {moved:.3e}")
    drift = 0.0
    if invariant is not None:
        inner = domain.sample(rng, samples)
        drift = float(np.max(np.abs(invariant(as_chain(b).apply(inner)) - invariant(inner))))
        if drift > 1e-8:
            raise SupportLeakError(f"disjoining map changes the fibre invariant by {drift:.3e}")
    return moved, drift


def two_summand_loop(K: Hamiltonian, F: Hamiltonian, flowK, b, domain: EllipsoidModel,
                     commutation: bool = True, support: bool = True, invariant=None) -> LoopGenerator:
    """Generator K + F o b^-1 o (psi^K_t)^-1 of psi^K_t o (b psi^F_t b^-1)."""
    if commutation:
        check_commutation(K, F, domain)
    b = as_chain(b)
    if support and b.primitives:
        check_support(b, domain, invariant)
    if not b.primitives:
        return LoopGenerator(Sum((K, F)), domain)
    return LoopGenerator(compose_generators(K, conjugate(F, b), flowK), domain)


def k_summand_loop(summands: Sequence[Hamiltonian], flows: Sequence[Callable], bs: Sequence, domain: EllipsoidModel,
                   commutation: bool = True, support: bool = True, invariant=None) -> LoopGenerator:
    """Nested loop psi0_t o (b1 psi1_t b1^-1) o ... o (bk psik_t bk^-1).

    ``flows[j](t)`` is the time-t map of ``summands[j]``; ``bs`` has one
    entry per summand after the first.
    """
    if len(bs) != len(summands) - 1 or len(flows) != len(summands):
        raise ValueError("need k+1 summands and flows and k disjoining maps")
    if commutation:
        for i in range(len(summands)):
            for j in range(i + 1, len(summands)):
                try:
                    check_commutation(summands[i], summands[j], domain)
                except CommutationError as exc:
                    raise CommutationError(f"summands {i} and {j}: {exc}") from exc
    gen = summands[0]
    chain_prev = flows[0]
    for j in range(1, len(summands)):
        b = as_chain(bs[j - 1])
        if support and b.primitives:
            try:
                check_support(b, domain, invariant)
            except SupportLeakError as exc:
                raise SupportLeakError(f"summand {j}: {exc}") from exc
        gen = compose_generators(gen, conjugate(summands[j], b), chain_prev)
        chain_prev = _nested_flow(chain_prev, flows[j], b)
    return LoopGenerator(gen, domain)


def _nested_flow(outer, inner, b):
    b_inv = invert_chain(b)
    return lambda t: b_inv.then(as_chain(inner(t))).then(b).then(as_chain(outer(t)))


# ---------------------------------------------------------------------------
# weight splitting


@dataclass(frozen=True)
class SplitMatrix:
    """Rows a_i of positive integers whose column sums are the distinct weights."""

    rows: tuple
    columns: tuple

    def __post_init__(self):
        a = np.asarray(self.rows, dtype=int)
        if a.ndim != 2 or a.shape[1] != len(self.columns):
            raise ValueError("split rows must match the number of distinct weights")
        if np.any(a < 1):
            raise ValueError("split entries must be positive integers")
        if tuple(a.sum(axis=0)) != tuple(self.columns):
            raise ValueError("columns must sum to the weights")

    @property
    def k(self) -> int:
        return len(self.rows) - 1

    def summands(self, weights) -> list:
        """H_(i)(z) = -sum_j a_{i, col(j)} pi|z_j|^2 for each row i."""
        col = {w: c for c, w in enumerate(self.columns)}
        idx = [col[w] for w in weights]
        return [QuadraticAffine.constant(0.0, quad=-np.asarray([row[c] for c in idx], float)) for row in self.rows]


def weight_split(weights) -> SplitMatrix:
    w = WeightVector(tuple(weights))
    distinct = tuple(sorted(set(w.k)))
    k = min(distinct) - 1
    rows = [tuple(1 for _ in distinct) for _ in range(k)]
    rows.append(tuple(kj - k for kj in distinct))
    return SplitMatrix(tuple(rows), distinct)


# ---------------------------------------------------------------------------
# the isolated-maximum scenario


def canonical_split(k1: int):
    return k1 // 2, k1 - k1 // 2


def best_index(weights: WeightVector) -> int:
    """Coordinate whose canonical split maximizes ab/k^2 (first one on ties)."""
    best, score = None, -1.0
    for j, kj in enumerate(weights):
        if kj < 2:
            continue
        a, b = canonical_split(kj)
        if a * b / kj**2 > score + 1e-15:
            best, score = j, a * b / kj**2
    if best is None:
        raise DomainError("all weights equal 1: no coordinate can be split and no shortening is available")
    return best


@dataclass(frozen=True)
class ShorteningScenario:
    model: EllipsoidModel
    index: int
    a: int
    b: int
    s: float
    d: float
    u: float = 1.0
    eps_bar: Optional[float] = None

    def __post_init__(self):
        k1 = self.model.weights[self.index]
        if self.a < 1 or self.b < 1 or self.a + self.b != k1:
            raise ContainmentError(f"split a + b = {self.a} + {self.b} must equal the weight {k1} with a, b >= 1")
        if not 0 < self.d < self.model.alpha:
            raise ContainmentError(f"need 0 < d < alpha, got d={self.d}")
        bound = self.a * self.b / k1**2 * self.model.alpha
        if not 0 < self.s < bound:
            raise ContainmentError(
                f"containment needs s < (ab/k1^2) alpha = {bound:.6g}, i.e. ab/(s k1) > k1/alpha; got s={self.s}"
            )
        if not 0.0 <= self.u <= 1.0:
            raise ValueError("u must lie in [0, 1]")
        if self.eps_bar is None:
            object.__setattr__(self, "eps_bar", 0.5 * self.max_eps_bar)
        elif not 0 < self.eps_bar < self.max_eps_bar:
            raise ContainmentError(f"eps_bar must lie in (0, {self.max_eps_bar:.6g}), got {self.eps_bar}")

    @property
    def k1(self) -> int:
        return self.model.weights[self.index]

    @property
    def max_eps_bar(self) -> float:
        """Slack left by k1 (A1 + A2(0)) = k1^2 s/(ab) below alpha, divided by k1."""
        return (self.model.alpha - self.k1**2 * self.s / (self.a * self.b)) / self.k1

    @classmethod
    def from_weights(cls, weights, alpha: float, d: float, h_max: float = 0.0, split=None, index=None,
                     s: Optional[float] = None, eps_bar=None, u: float = 1.0):
        model = EllipsoidModel(WeightVector(tuple(weights)), alpha, h_max)
        j = best_index(model.weights) if index is None else index
        a, b = canonical_split(model.weights[j]) if split is None else split
        if s is None:
            s = a * b / model.weights[j] ** 2 * d
        return cls(model, j, a, b, s, d, u, eps_bar)

    def K(self) -> QuadraticAffine:
        q = np.zeros(self.model.n)
        q[self.index] = -self.b
        return QuadraticAffine.constant(self.model.h_max, quad=q)

    def F(self) -> QuadraticAffine:
        q = -self.model.weights.as_array()
        q[self.index] = -self.a
        return QuadraticAffine.constant(0.0, quad=q)

    def fibre_invariant(self, z) -> np.ndarray:
        k = self.model.weights.as_array().copy()
        k[self.index] = 0.0
        return np.pi * np.sum(k * np.abs(z) ** 2, axis=-1)

    def flow_K(self, t: float) -> SymplecticMapChain:
        return SymplecticMapChain((Rotation(self.index, float(self.b), t),))

    def family_spec(self) -> FamilyDisjoinSpec:
        return FamilyDisjoinSpec(
            self.model,
            self.index,
            Affine(self.s / self.b),
            Affine(self.s / self.a, -1.0 / self.a),
            self.eps_bar,
        )


@dataclass
class PipelineResult:
    scenario: ShorteningScenario
    u_values: np.ndarray
    loops: list
    reports: list
    ell_plus: np.ndarray
    ell_minus: np.ndarray
    max_values: np.ndarray
    min_values: np.ndarray
    disjointness_gap: float
    checks: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def drop(self) -> float:
        return float(self.ell_plus[0] - self.ell_plus[-1])


def theorem_isolated_pipeline(
    scenario: ShorteningScenario,
    u_values: Optional[Sequence[float]] = None,
    t_nodes: int = DEFAULT_T_NODES,
    grid: Optional[dict] = None,
    disjoint_samples: int = 500,
    seed: int = 0,
    tol: float = 0.01,
    verify_support: bool = True,
) -> PipelineResult:
    """Deform the circle action by the family disjoiner and measure lengths.

    The deformation at parameter u uses b = (time-u map of the family
    disjoiner)^-1, so that the generator is K + F o Phi_u o (psi^K_t)^-1.
    """
    from .reduced import ReducedExtremizer

    clock = time.perf_counter()
    timings = {}
    if u_values is None:
        u_values = np.linspace(0.0, scenario.u, 11)
    u_values = np.asarray(u_values, dtype=float)
    spec = scenario.family_spec()
    disjoiner = family_disjoiner(spec)
    timings["disjoiner"] = time.perf_counter() - clock

    K, F = scenario.K(), scenario.F()
    model = scenario.model
    check_commutation(K, F, model)
    if verify_support:
        t0 = time.perf_counter()
        check_support(invert_chain(disjoiner(u_values[-1])), model, scenario.fibre_invariant, samples=100)
        timings["support"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    gap, _, _ = disjoiner.verify_disjointness(disjoint_samples, seed=seed, tau=1.0) if scenario.u == 1.0 else (
        float("nan"), None, None)
    timings["disjointness"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ext = ReducedExtremizer(scenario, disjoiner, u_values, **(grid or {}))
    timings["reduced_grid"] = time.perf_counter() - t0

    loops, reports = [], []
    for u in u_values:
        b = invert_chain(disjoiner(float(u)))
        loop = two_summand_loop(K, F, scenario.flow_K, b, model, commutation=False, support=False)
        loop.extremizer = ext.for_u(float(u))
        loops.append(loop)
    t0 = time.perf_counter()
    reports = parallel_map(lambda lp: hofer_length(lp, t_nodes), loops)
    timings["lengths"] = time.perf_counter() - t0

    ell_plus = np.array([r.ell_plus for r in reports])
    ell_minus = np.array([r.ell_minus for r in reports])
    max_values = np.array([r.max_values for r in reports])
    min_values = np.array([r.min_values for r in reports])
    h_max = model.h_max
    h_min = model.h_max - model.alpha
    checks = {
        "max_safety_violation": float(np.max(max_values - h_max)),
        "inf_deviation": float(np.max(np.abs(min_values - h_min))),
        "path_above_start": float(np.max(ell_plus - ell_plus[0])),
        "disjointness_gap": gap,
    }
    timings["total"] = time.perf_counter() - clock
    return PipelineResult(
        scenario,
        u_values,
        loops,
        reports,
        ell_plus,
        ell_minus,
        max_values,
        min_values,
        gap,
        checks,
        timings,
        {"T": disjoiner.T, "delta": disjoiner.delta, "eps": spec.eps, "eps_bar": spec.eps_bar,
         "window": spec.window, "argmax": {u: ext.best[u] for u in ext.u_values}, **ext.diagnostics},
    )
