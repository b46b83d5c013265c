import math

import numpy as np
import pytest

from hofer_forge.calculus import (
    AutoExtremizer,
    GridExtremizer,
    LoopGenerator,
    compose_generators,
    conjugate,
    extremize_quadratic,
    hofer_length,
    reference_level,
    reparametrize,
    simpson,
    simpson_weights,
    verify_loop_closure,
)
from hofer_forge.core import EllipsoidModel, Rotation, SymplecticMapChain, Translation
from hofer_forge.errors import DomainError
from hofer_forge.hamiltonians import FunctionHamiltonian, QuadraticAffine, QuadraticSlice, zero_hamiltonian
from hofer_forge.index import DeformationParams, d_radius, embedded_length
from hofer_forge.shorten import polterovich_loop

DISC = QuadraticAffine.circle_action((1,))


def _pts(rng, count=100, n=1, scale=0.6):
    return scale * (rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n)))


def test_conjugate_by_translation_completes_the_square(rng):
    lam = 0.4 - 0.3j
    G = conjugate(DISC, SymplecticMapChain((Translation(0, lam),)))
    assert isinstance(G, QuadraticAffine)
    z = _pts(rng)
    expanded = -math.pi * np.abs(z[:, 0]) ** 2 + 2 * math.pi * (np.conj(lam) * z[:, 0]).real - math.pi * abs(lam) ** 2
    assert np.allclose(G.value(0.0, z), -math.pi * np.abs(z[:, 0] - lam) ** 2, atol=1e-13)
    assert np.allclose(G.value(0.0, z), expanded, atol=1e-13)


def test_conjugate_by_identity_returns_same_object():
    assert conjugate(DISC, SymplecticMapChain()) is DISC


def test_conjugate_by_rotation_is_invariant(rng):
    G = conjugate(DISC, SymplecticMapChain((Rotation(0, 1.0, 0.3),)))
    z = _pts(rng)
    assert np.max(np.abs(G.value(0.0, z) - DISC.value(0.0, z))) < 1e-12


def test_compose_rotation_invariance(rng):
    G = compose_generators(DISC, DISC, lambda t: SymplecticMapChain((Rotation(0, 1.0, t),)))
    z = _pts(rng)
    for t in (0.0, 0.3, 0.8):
        assert np.max(np.abs(G.value(t, z) + 2 * math.pi * np.abs(z[:, 0]) ** 2)) < 1e-12


def test_compose_with_zero_is_identity(rng):
    K = QuadraticAffine.circle_action((2,))
    G = compose_generators(K, zero_hamiltonian(1), lambda t: SymplecticMapChain((Rotation(0, 2.0, t),)))
    z = _pts(rng)
    assert np.allclose(G.value(0.4, z), K.value(0.4, z), atol=1e-15)


@pytest.mark.parametrize("a,b", [(1, 1), (2, 1), (1, 3)])
def test_compose_two_rotations_about_different_centres(rng, a, b):
    lam = 0.3 + 0.2j
    K = QuadraticAffine.circle_action((a,))
    inner = conjugate(QuadraticAffine.circle_action((b,)), SymplecticMapChain((Translation(0, lam),)))
    G = compose_generators(K, inner, lambda t: SymplecticMapChain((Rotation(0, float(a), t),)))
    z = _pts(rng)
    for t in np.linspace(0, 1, 7):
        by_hand = -a * math.pi * np.abs(z[:, 0]) ** 2 - b * math.pi * np.abs(
            np.exp(2j * math.pi * a * t) * z[:, 0] - lam) ** 2
        assert np.max(np.abs(G.value(t, z) - by_hand)) < 1e-10


def test_reparametrize_identity(rng):
    G = reparametrize(DISC, lambda s: s, lambda s: 1.0)
    z = _pts(rng)
    assert np.allclose(G.value(0.3, z), DISC.value(0.3, z))


def test_reparametrize_doubling_gives_twice_the_generator(rng):
    G = reparametrize(DISC, lambda s: 2 * s, lambda s: 2.0)
    z = _pts(rng)
    assert np.allclose(G.value(0.3, z), 2 * DISC.value(0.6, z))
    assert np.allclose(G.quadratic_slice(0.1).quad, [-2.0])


def test_reparametrize_quadratic_time():
    one = QuadraticAffine.constant(1.0, n=1)
    G = reparametrize(one, lambda s: s * s, lambda s: 2 * s)
    ts = np.linspace(0, 1, 257)
    vals = np.array([G.value(t, [[0j]])[0] for t in ts])
    assert np.allclose(vals, 2 * ts)
    assert simpson(vals) == pytest.approx(1.0, abs=1e-12)


def test_simpson_weights_validation():
    with pytest.raises(ValueError):
        simpson_weights(4)
    assert simpson_weights(257).sum() == pytest.approx(1.0)


def test_circle_action_total_length_on_grid():
    model = EllipsoidModel((3, 1), 1.0)
    H = QuadraticAffine.circle_action((3, 1))
    # hide the quadratic structure so the grid extremizer is used
    opaque = FunctionHamiltonian(H.value, 2, gradient=H.gradient)
    loop = LoopGenerator(opaque, model, AutoExtremizer(GridExtremizer(201)))
    rep = hofer_length(loop, 5, estimate_error=False)
    assert rep.total == pytest.approx(1.0, rel=0.01)
    exact = hofer_length(LoopGenerator(H, model))
    assert exact.total == pytest.approx(1.0, abs=1e-12)
    assert exact.ell_plus == pytest.approx(0.5, abs=1e-12)


def test_zero_generator_has_zero_total():
    model = EllipsoidModel((2,), 1.0)
    rep = hofer_length(LoopGenerator(zero_hamiltonian(1), model))
    assert rep.total == pytest.approx(0.0, abs=1e-15)
    assert rep.ell_plus == pytest.approx(-rep.ell_minus, abs=1e-15)
    assert rep.reference == reference_level(model)


def test_single_block_length_decrease():
    model = EllipsoidModel((2,), 1.0)
    direction = DeformationParams.from_real(model.weights, [1.0, 0.0])
    lam = 0.5 * d_radius(direction, 0.25)
    params = direction.scaled(lam)
    drop = embedded_length(model, DeformationParams.zeros(model.weights)) - embedded_length(model, params)
    assert drop == pytest.approx(math.pi * 0.5 * lam ** 2, abs=1e-4)


def test_extremize_quadratic_against_grid(rng):
    model = EllipsoidModel((3, 1), 1.0)
    s = QuadraticSlice(0.2, np.array([0.4 - 0.1j, -0.3j]), np.array([-1.0, 2.0]))
    vmax, amax, vmin, amin = extremize_quadratic(s, model)
    grid = GridExtremizer(201)
    gmax, _, gmin, _ = grid.extrema(s.value, model)
    assert vmax == pytest.approx(gmax, abs=1e-7)
    assert vmin == pytest.approx(gmin, abs=1e-7)
    assert s.value(amax[None])[0] == pytest.approx(vmax, abs=1e-12)
    assert model.norm_function(amax) <= 1.0 + 1e-12


def test_hofer_length_rejects_even_nodes():
    loop = LoopGenerator(DISC, EllipsoidModel((1,), 1.0))
    with pytest.raises(ValueError):
        hofer_length(loop, 256)


def test_loop_generator_dimension_check():
    with pytest.raises(DomainError):
        LoopGenerator(DISC, EllipsoidModel((1, 1), 1.0))


def test_circle_action_closure():
    loop = LoopGenerator(QuadraticAffine.circle_action((2, 1)), EllipsoidModel((2, 1), 1.0))
    assert verify_loop_closure(loop, 50, 10_000) < 1e-6


def test_polterovich_closure():
    model = EllipsoidModel((1,), 1.0)
    b = SymplecticMapChain((Translation(0, 0.2 + 0.1j), Rotation(0, 1.0, 0.15)))
    loop = polterovich_loop(QuadraticAffine.circle_action((2,)), b, model)
    assert verify_loop_closure(loop, 50, 10_000) < 1e-5


def test_translation_generator_is_not_a_loop():
    # H = 2 Re(z) translates by 2i per unit time
    trans = QuadraticAffine.constant(0.0, linear=np.array([1.0 + 0j]))
    loop = LoopGenerator(trans, EllipsoidModel((1,), 1.0))
    assert verify_loop_closure(loop, 50, 100) > 0.1
