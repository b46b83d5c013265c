import math

import numpy as np
import pytest

from hofer_forge.core import IntegratedFlow, Rotation, SymplecticMapChain, Translation
from hofer_forge.errors import DimensionMismatchError
from hofer_forge.hamiltonians import (
    FunctionHamiltonian,
    Pullback,
    QuadraticAffine,
    QuadraticSlice,
    Scaled,
    Sum,
    finite_difference_gradient,
    zero_hamiltonian,
)


def _points(rng, count, n):
    return 0.4 * (rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n)))


def test_slice_value_matches_definition(rng):
    s = QuadraticSlice(0.3, np.array([0.2 - 0.1j, 0.5j]), np.array([-2.0, 1.5]))
    z = _points(rng, 20, 2)
    by_hand = 0.3 + np.sum(s.quad * math.pi * np.abs(z) ** 2 + 2 * (np.conj(s.linear) * z).real, axis=-1)
    assert np.allclose(s.value(z), by_hand, atol=1e-14)


def test_slice_gradient_matches_finite_differences(rng):
    s = QuadraticSlice(-1.0, np.array([0.2 - 0.1j, 0.5j]), np.array([-2.0, 1.5]))
    z = _points(rng, 10, 2)
    assert np.max(np.abs(s.gradient(z) - finite_difference_gradient(s.value, z))) < 1e-7


def test_pullback_affine_matches_composition(rng):
    s = QuadraticSlice(0.1, np.array([0.3 + 0.2j]), np.array([-3.0]))
    phase, offset = np.exp(0.7j), 0.2 - 0.4j
    z = _points(rng, 30, 1)
    pulled = s.pullback_affine(np.array([phase]), np.array([offset]))
    assert np.allclose(pulled.value(z), s.value(phase * z + offset), atol=1e-13)


def test_sum_and_scaled():
    H = QuadraticAffine.circle_action((2, 1))
    G = Sum((H, Scaled(H, 0.5)))
    z = np.array([[0.1 + 0.2j, -0.3j]])
    assert G.value(0.0, z) == pytest.approx(1.5 * H.value(0.0, z))
    assert np.allclose(G.quadratic_slice(0.0).quad, [-3.0, -1.5])


def test_sum_rejects_mixed_dimensions():
    with pytest.raises(DimensionMismatchError):
        Sum((zero_hamiltonian(1), zero_hamiltonian(2)))


def test_pullback_by_affine_chain_is_quadratic(rng):
    H = QuadraticAffine.circle_action((1,))
    chain = SymplecticMapChain((Translation(0, 0.3), Rotation(0, 2.0, 0.1)))
    P = Pullback(H, chain)
    z = _points(rng, 20, 1)
    assert np.allclose(P.quadratic_slice(0.0).value(z), H.value(0.0, chain.apply(z)), atol=1e-13)
    assert np.max(np.abs(P.gradient(0.0, z) - finite_difference_gradient(lambda w: P.value(0.0, w), z))) < 1e-7


def test_pullback_by_flow_gradient(rng):
    # nonlinear chain: the gradient goes through the push-forward branch
    quartic = FunctionHamiltonian(lambda t, z: -np.sum(np.abs(z) ** 4, axis=-1), 1,
                                  gradient=lambda t, z: -4 * np.abs(z) ** 2 * z)
    chain = SymplecticMapChain((IntegratedFlow(quartic, 0.0, 0.3, 400),))
    H = QuadraticAffine.constant(0.0, linear=np.array([0.5 + 0.2j]), quad=np.array([-1.0]))
    P = Pullback(H, chain)
    z = _points(rng, 8, 1)
    assert P.quadratic_slice(0.0) is None
    fd = finite_difference_gradient(lambda w: P.value(0.0, w), z)
    assert np.max(np.abs(P.gradient(0.0, z) - fd)) < 1e-5


def test_function_hamiltonian_default_gradient(rng):
    F = FunctionHamiltonian(lambda t, z: np.sum(z.real ** 3 - z.imag * z.real, axis=-1), 2)
    z = _points(rng, 5, 2)
    exact = 3 * z.real ** 2 - z.imag + 1j * (-z.real)
    assert np.max(np.abs(F.gradient(0.0, z) - exact)) < 1e-6
