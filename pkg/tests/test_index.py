import math

import numpy as np
import pytest
from scipy.optimize import minimize

from hofer_forge.calculus import hofer_length
from hofer_forge.core import EllipsoidModel
from hofer_forge.errors import DConditionError, DomainError
from hofer_forge.flows import hamiltonian_vector_field
from hofer_forge.hamiltonians import QuadraticAffine, QuadraticSlice
from hofer_forge.index import (
    DeformationParams,
    block_length,
    block_loop_chain,
    check_d_conditions,
    d_radius,
    deformation_generator,
    embed_deformation,
    embedded_hessian,
    hessian_at_origin,
    minimize_quadratic,
    richardson_hessian,
    single_block_generator,
    total_length,
)

E = lambda t: np.exp(2j * math.pi * t)


def _pts(rng, count=50, scale=0.5):
    return scale * (rng.normal(size=(count, 1)) + 1j * rng.normal(size=(count, 1)))


def _unit(weights, seed=5):
    m = EllipsoidModel(weights, 1.0)
    d = DeformationParams.from_real(m.weights, np.random.default_rng(seed).normal(size=DeformationParams.zeros(
        m.weights).dimension))
    return m, d.scaled(1.0 / d.norm())


# -- parameters --------------------------------------------------------------


def test_params_roundtrip_and_labels():
    p = DeformationParams.from_real((3, 1, 2), [1, 2, 3, 4, 5, 6])
    assert np.allclose(p.blocks[0], [1 + 2j, 3 + 4j])
    assert p.blocks[1].size == 0
    assert np.allclose(p.to_real(), [1, 2, 3, 4, 5, 6])
    assert p.labels() == ["z0.l1.re", "z0.l1.im", "z0.l2.re", "z0.l2.im", "z2.l1.re", "z2.l1.im"]
    with pytest.raises(DomainError):
        DeformationParams.from_real((3,), [1.0])


# -- one block ---------------------------------------------------------------


@pytest.mark.parametrize("k", [2, 3, 5])
def test_zero_block_is_multiple_circle_action(rng, k):
    G = single_block_generator(k, np.zeros(k - 1))
    z = _pts(rng)
    assert np.allclose(G.value(0.3, z), -k * math.pi * np.abs(z[:, 0]) ** 2, atol=1e-13)


def test_two_block_formula(rng):
    lam = 0.6 - 0.2j
    G = single_block_generator(2, [lam])
    z = _pts(rng)
    for t in np.linspace(0, 1, 5):
        expected = np.abs(z[:, 0]) ** 2 + np.abs(E(t) * z[:, 0] - lam) ** 2
        assert np.allclose(-G.value(t, z) / math.pi, expected, atol=1e-12)


@pytest.mark.parametrize("lam", [[0.3 + 0.1j, -0.2 + 0.4j], [0.1, -0.3j, 0.25 + 0.05j]])
def test_block_formula_as_sum_of_shifted_discs(rng, lam):
    # each factor is a unit rotation about its centre c_m = lam_m + ... + lam_{k-1}
    G = single_block_generator(len(lam) + 1, lam)
    centres = [sum(lam[m:]) for m in range(len(lam))] + [0.0]
    z = _pts(rng)[:, 0]
    for t in rng.uniform(0, 1, 6):
        expected = np.zeros(z.shape)
        w = z.copy()
        for c in reversed(centres):
            expected += -math.pi * np.abs(w - c) ** 2
            w = c + E(t) * (w - c)
        assert np.max(np.abs(G.value(t, z[:, None]) - expected)) < 1e-10


@pytest.mark.parametrize("k,lam", [(2, [0.4j]), (3, [0.3 + 0.1j, -0.2 + 0.4j]), (4, [0.1, 0.2j, -0.15])])
def test_generator_drives_the_loop_chain(rng, k, lam):
    # d/dt of the explicit loop equals the field of the folded generator
    G = single_block_generator(k, lam)
    z0 = _pts(rng, 10)
    h = 1e-5
    for t in (0.1, 0.45, 0.8):
        here = block_loop_chain(k, lam, t).apply(z0)
        vel = (block_loop_chain(k, lam, t + h).apply(z0) - block_loop_chain(k, lam, t - h).apply(z0)) / (2 * h)
        field = 1j * G.gradient(t, here)
        assert np.max(np.abs(vel - field)) < 1e-6
    assert np.max(np.abs(block_loop_chain(k, lam, 1.0).apply(z0) - z0)) < 1e-12


def test_block_generator_validation():
    with pytest.raises(DomainError):
        single_block_generator(1, [])
    with pytest.raises(DomainError):
        single_block_generator(3, [0.1])


# -- completing the square ---------------------------------------------------


@pytest.mark.parametrize("t", [0.0, 0.2, 0.7])
def test_single_block_minimum(t):
    res = minimize_quadratic(single_block_generator(2, [1.0]).quadratic_slice(t))
    assert res.value == pytest.approx(0.5, abs=1e-14)


def test_zero_block_minimum():
    res = minimize_quadratic(single_block_generator(3, [0, 0]).quadratic_slice(0.4))
    assert res.value == 0.0
    assert res.argmin == 0


def test_minimum_against_grid():
    res = minimize_quadratic(single_block_generator(3, [1.0, 1.0]).quadratic_slice(0.0))
    xs = np.linspace(-4, 4, 401)
    X, Y = np.meshgrid(xs, xs)
    Z = X + 1j * Y
    grid = np.abs(Z) ** 2 + np.abs(Z - 1) ** 2 + np.abs(Z - 2) ** 2
    assert res.value == pytest.approx(grid.min(), abs=1e-6)
    assert res.argmin == pytest.approx(1.0)


def test_minimum_requires_positive_definite():
    with pytest.raises(DomainError):
        minimize_quadratic(QuadraticSlice(0.0, np.array([0.1 + 0j]), np.array([1.0])))


# -- block length ------------------------------------------------------------


def test_block_length_values():
    assert block_length(3, [0, 0]) == 0.0
    assert block_length(2, [1.0]) == pytest.approx(0.5, abs=1e-6)
    assert block_length(3, [1.0, 1.0]) == pytest.approx(2 * (1 - 2 / 3) + (1 - 1 / 3), abs=1e-5)


def test_total_length_adds_blocks():
    p = DeformationParams.from_real((2, 1, 3), [0.3, 0.1, 0.2, -0.1, 0.05, 0.4])
    by_block = block_length(2, p.blocks[0]) + block_length(3, p.blocks[2])
    assert total_length(p) == pytest.approx(by_block, abs=1e-14)


# -- Hessian -----------------------------------------------------------------


def test_hessian_weight_three():
    hr = hessian_at_origin((3,))
    assert hr.numeric.shape == (4, 4)
    assert np.allclose(hr.numeric_coefficients, 2 / 3, rtol=5e-3)
    assert hr.max_relative_deviation < 5e-3
    assert hr.asymmetry < 1e-9


def test_hessian_two_blocks_is_block_diagonal():
    hr = hessian_at_origin((2, 2))
    assert np.allclose(hr.numeric_coefficients, 0.5, rtol=5e-3)
    assert hr.cross_block < 1e-6


def test_hessian_weight_four_coefficients():
    hr = hessian_at_origin((4,))
    assert np.allclose(hr.numeric_coefficients, [0.75, 0.75, 1.0, 1.0, 0.75, 0.75], rtol=5e-3)


def test_hessian_semifree_is_empty():
    hr = hessian_at_origin((1, 1))
    assert hr.numeric.shape == (0, 0)
    assert hr.labels == []


def test_richardson_hessian_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, -1.0]])
    H = richardson_hessian(lambda v: 0.5 * v @ A @ v + v[0] ** 3, 2, 1e-3)
    assert np.allclose(H, A, atol=1e-8)
    with pytest.raises(DomainError):
        richardson_hessian(lambda v: 0.0, 1, 1e-160)


# -- D-neighbourhood and the cut-off embedding ---------------------------------


def test_d_conditions_small_and_large():
    _, unit = _unit((3, 1))
    r = d_radius(unit, 0.25)
    assert 0 < r < math.inf
    assert check_d_conditions(unit.scaled(r), 0.25).holds
    assert not check_d_conditions(unit.scaled(3 * r), 0.25).holds


def test_d_conditions_closed_form_max(rng):
    # the closed-form maximum c + S agrees with a brute-force sample maximum
    _, unit = _unit((3, 1))
    params = unit.scaled(0.2)
    G = deformation_generator(params)
    z = 0.2 * (rng.normal(size=(200000, 2)) + 1j * rng.normal(size=(200000, 2)))
    s = G.quadratic_slice(0.3)
    S = float(np.sum(np.abs(s.linear) ** 2 / (math.pi * params.weights.as_array())))
    assert G.value(0.3, z).max() <= s.constant + S + 1e-12
    # polish the best sample with BFGS as an independent maximiser
    start = z[np.argmax(G.value(0.3, z))]
    f = lambda v: -float(G.value(0.3, (v[:2] + 1j * v[2:])[None, :])[0])
    res = minimize(f, np.concatenate([start.real, start.imag]), method="BFGS", options={"gtol": 1e-12})
    assert -res.fun == pytest.approx(s.constant + S, abs=1e-8)


def test_embedding_rejects_large_deformation():
    m, unit = _unit((3, 1))
    with pytest.raises(DConditionError) as info:
        embed_deformation(m, unit.scaled(1.0))
    assert info.value.condition


def test_embedding_at_zero_is_momentum(rng):
    m = EllipsoidModel((3, 1), 1.0, h_max=2.0)
    loop = embed_deformation(m, DeformationParams.zeros(m.weights))
    z = m.sample(rng, 200)
    assert np.allclose(loop.generator.value(0.4, z), m.momentum(z), atol=1e-15)


def test_embedding_outside_cutoff_is_momentum(rng):
    m, unit = _unit((3, 1))
    loop = embed_deformation(m, unit.scaled(0.5 * d_radius(unit, 0.25)))
    z = m.sample(rng, 2000)
    z = z[m.norm_function(z) > 0.25]
    assert np.array_equal(loop.generator.value(0.7, z), m.momentum(z))


def test_embedding_keeps_unconstrained_maximum():
    m, unit = _unit((3, 1))
    params = unit.scaled(0.5 * d_radius(unit, 0.25))
    loop = embed_deformation(m, params)
    rep = hofer_length(loop, 17, estimate_error=False)
    G = deformation_generator(params)
    for t, mx in zip(rep.t_nodes, rep.max_values):
        s = G.quadratic_slice(t)
        closed = s.constant + float(np.sum(np.abs(s.linear) ** 2 / (math.pi * params.weights.as_array())))
        assert mx == pytest.approx(m.h_max + closed, abs=1e-8)
    assert np.all(rep.min_values == m.h_max - m.alpha)


def test_embedded_gradient_matches_finite_differences(rng):
    from hofer_forge.hamiltonians import finite_difference_gradient

    m, unit = _unit((3, 1))
    loop = embed_deformation(m, unit.scaled(0.5 * d_radius(unit, 0.25)))
    z = m.sample(rng, 40, fraction=0.3)
    G = loop.generator
    fd = finite_difference_gradient(lambda w: G.value(0.3, w), z)
    assert np.max(np.abs(G.gradient(0.3, z) - fd)) < 1e-6


def test_embedded_hessian_is_scaled_block_hessian():
    m = EllipsoidModel((2,), 1.0)
    H = embedded_hessian(m)
    assert np.allclose(H, -math.pi * np.diag([1.0, 1.0]), atol=1e-6)


def test_deformation_vector_field_is_quadratic_affine():
    params = DeformationParams.from_real((2,), [0.1, 0.0])
    G = deformation_generator(params)
    assert isinstance(G, QuadraticAffine)
    X = hamiltonian_vector_field(G, 0.0, [0j])
    assert np.all(np.isfinite(X))
