import math

import numpy as np
import pytest

from conftest import random_dirichlet
from impulsive_duality.critical_point import descent_loop
from impulsive_duality.dual_action import build_functionals, chi, chi_gradient, chi_pairing, phi
from impulsive_duality.errors import DirichletError
from impulsive_duality.function_space import EnsembleProcess, GridSpec, OrbitGrid, inner_product
from impulsive_duality.hamiltonian import quadratic_hamiltonian
from impulsive_duality.scenario import builtin


def setup(name):
    sc = builtin(name)
    orbits = sc.solve_orbits()
    return sc, orbits, sc.grids(orbits)


def five_point(f, eps):
    return (8 * (f(eps) - f(-eps)) - (f(2 * eps) - f(-2 * eps))) / (12 * eps)


@pytest.mark.parametrize("name", ["example-4.1-free", "example-4.1-fixed", "quadratic-impulses"])
def test_pairing_matches_finite_differences(name):
    sc, orbits, grids = setup(name)
    spec = sc.hamiltonian
    rng = np.random.default_rng(7)
    v = random_dirichlet(grids, rng)
    for _ in range(20):
        h = random_dirichlet(grids, rng)
        pr = chi_pairing(v, h, spec, orbits)
        fd = five_point(lambda s: chi(v + s * h, spec, orbits, with_gradient=False).chi_value, 1e-4)
        assert abs(fd - pr) <= 1e-5 * max(abs(pr), 1e-8)


def test_terms_add_up():
    sc, orbits, grids = setup("example-4.1-fixed")
    v = random_dirichlet(grids, np.random.default_rng(1))
    rep = chi(v, sc.hamiltonian, orbits)
    total = rep.term_symplectic + rep.term_conjugate + rep.term_impulse
    assert rep.chi_value == pytest.approx(total, abs=1e-14)
    assert rep.term_impulse != 0.0
    assert rep.gradient_norm > 0


def test_chi_at_zero_is_exactly_zero():
    sc, orbits, grids = setup("example-4.1-fixed")
    rep = chi(EnsembleProcess.zeros(grids, 2), sc.hamiltonian, orbits)
    assert rep.chi_value == 0.0


def test_riesz_identity():
    sc, orbits, grids = setup("example-4.1-fixed")
    rng = np.random.default_rng(3)
    v = random_dirichlet(grids, rng)
    grad = chi_gradient(v, sc.hamiltonian, orbits)
    for _ in range(5):
        h = random_dirichlet(grids, rng)
        pr = chi_pairing(v, h, sc.hamiltonian, orbits)
        assert inner_product(grad, h) == pytest.approx(pr, rel=1e-10, abs=1e-12)


def test_gradient_norm_matches_riesz_representative():
    sc, orbits, grids = setup("quadratic-impulses")
    v = random_dirichlet(grids, np.random.default_rng(4))
    rep = chi(v, sc.hamiltonian, orbits)
    g = chi_gradient(v, sc.hamiltonian, orbits)
    assert rep.gradient_norm == pytest.approx(math.sqrt(inner_product(g, g)), rel=1e-10)


def test_phi_of_half_sine_wave():
    g = OrbitGrid(1.0, spec=GridSpec(nodes=1025))
    u = EnsembleProcess.from_function(
        [g], lambda t: np.outer(np.sin(np.pi * np.asarray(t)), [1.0, 0.0]))
    assert phi(u, quadratic_hamiltonian()) == pytest.approx(-0.25, abs=1e-6)


@pytest.mark.parametrize("norm", [0.5, 1.0, 3.0])
def test_loop_symplectic_term(norm):
    g = OrbitGrid(1.0, spec=GridSpec(nodes=1025))
    e = norm * np.array([0.6, 0.8])
    v = descent_loop([g], 1.0, e)
    rep = chi(v, quadratic_hamiltonian(), with_gradient=False)
    assert rep.term_symplectic == pytest.approx(-math.pi * norm**2, rel=1e-4)


def test_pairing_is_linear_in_direction():
    sc, orbits, grids = setup("example-4.1-fixed")
    rng = np.random.default_rng(5)
    v, h1, h2 = (random_dirichlet(grids, rng) for _ in range(3))
    spec = sc.hamiltonian
    lhs = chi_pairing(v, 2.0 * h1 - 0.5 * h2, spec, orbits)
    rhs = 2.0 * chi_pairing(v, h1, spec, orbits) - 0.5 * chi_pairing(v, h2, spec, orbits)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_non_dirichlet_direction_rejected():
    sc, orbits, grids = setup("quadratic")
    v = random_dirichlet(grids, np.random.default_rng(6))
    h = EnsembleProcess.from_function(grids, lambda t: np.ones((len(t), 2)))
    with pytest.raises(DirichletError):
        chi_pairing(v, h, sc.hamiltonian, orbits)


def test_orbits_decouple():
    sc = builtin("example-4.1")
    orbits = sc.sampled_orbits(2)
    grids = sc.grids(orbits)
    v = random_dirichlet(grids, np.random.default_rng(8))
    whole = chi(v, sc.hamiltonian, orbits, with_gradient=False).chi_value
    parts = [chi(v.orbit(i), sc.hamiltonian, [orbits[i]], with_gradient=False).chi_value
             for i in range(2)]
    assert whole == pytest.approx(sum(parts) / 2, rel=1e-13)


def test_impulse_term_scales_with_jumps():
    sc, orbits, grids = setup("quadratic-impulses")
    big = sc.with_jump_scale(2.0)
    big_orbits = big.solve_orbits()
    v = random_dirichlet(grids, np.random.default_rng(9))
    one = chi(v, sc.hamiltonian, orbits, with_gradient=False)
    two = chi(v, big.hamiltonian, big_orbits, with_gradient=False)
    assert two.term_impulse == pytest.approx(2 * one.term_impulse, rel=1e-14)
    assert two.term_conjugate == one.term_conjugate
    assert two.term_symplectic == one.term_symplectic


def test_functional_value_matches_chi():
    sc, orbits, grids = setup("example-4.1-fixed")
    v = random_dirichlet(grids, np.random.default_rng(10))
    f = build_functionals(grids, sc.hamiltonian, orbits, 2)[0]
    x = f.from_nodes(v.values[0])
    assert f.value(x) == pytest.approx(chi(v, sc.hamiltonian, orbits).chi_value, rel=1e-12)
    assert np.allclose(f.to_nodes(x), v.values[0])
