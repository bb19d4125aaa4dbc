import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulsive_duality.errors import ConfigurationError, DomainError
from impulsive_duality.function_space import (
    EnsembleProcess,
    GridSpec,
    OrbitGrid,
    coarsen_orbit,
    derivative,
    estimate_K,
    expectation_cs_check,
    inner_product,
    integrate,
    pc1_norm,
    pc_norm,
    trial_function,
)
from impulsive_duality.impulse_process import ImpulseSpec, fixed_orbit, sample_orbit


def const(c):
    return lambda t: np.tile(np.asarray(c, dtype=float), (len(t), 1))


def wave(k, e=(1.0, 0.0)):
    return lambda t: np.outer(np.sin(k * math.pi * np.asarray(t)), e)


def test_grid_structure():
    g = OrbitGrid(1.0, [0.3, 0.55])
    assert g.n_segments == 3
    assert np.all(g.times[g.left_nodes] == g.times[g.right_nodes])
    assert np.all(np.diff(g.times) >= 0)
    for a, b in g.segments:
        assert b - a >= 3 and np.all(np.diff(g.times[a:b]) > 0)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_grid_rejects_bad_times():
    with pytest.raises(DomainError):
        OrbitGrid(1.0, [0.5, 0.4])
    with pytest.raises(ConfigurationError):
        GridSpec(nodes=8)


def test_coarsening_merges_close_impulses():
    o = fixed_orbit([0.3, 0.3 + 1e-9, 0.6], [[0.1, 0], [0.2, 0], [0.0, 0.3]], 1.0)
    c = coarsen_orbit(o)
    assert c.times.tolist() == [0.3, 0.6]
    assert c.jumps[0] == pytest.approx([0.3, 0.0])
    assert np.sum(c.jumps, axis=0) == pytest.approx(np.sum(o.jumps, axis=0))


def test_coarsened_example_orbits_are_gridable():
    spec = ImpulseSpec(horizon=1.0)
    for seed in range(20):
        c = coarsen_orbit(sample_orbit(spec, seed))
        OrbitGrid(1.0, c.times)


def test_pc_norm_examples(grid):
    x = EnsembleProcess.from_function([grid], const([3.0, 4.0]))
    assert pc_norm(x) == pytest.approx(5.0)
    two = EnsembleProcess((grid, grid), (grid.sample(const([1.0, 0.0])),
                                          grid.sample(const([0.0, 0.0]))))
    assert pc_norm(two) == pytest.approx(math.sqrt(0.5))
    assert pc_norm(EnsembleProcess.from_function([grid], wave(1))) == pytest.approx(1.0, abs=1e-12)


def test_pc_norm_grid_refinement():
    fn = lambda t: np.outer(np.sin(np.pi * np.asarray(t) + 0.3 * math.sqrt(2)), [1.0, 0.0])  # noqa: E731
    errs = []
    for n in (33, 65, 129):
        g = OrbitGrid(1.0, spec=GridSpec(nodes=n))
        errs.append(abs(pc_norm(EnsembleProcess.from_function([g], fn)) - 1.0))
    assert errs[2] < errs[0]
    assert max(errs) < (math.pi / 32) ** 2


def test_pc1_norm_examples(grid):
    x = EnsembleProcess.from_function([grid], wave(2))
    assert pc1_norm(x) == pytest.approx(2 * math.pi, rel=2e-3)
    fine = EnsembleProcess.from_function([OrbitGrid(1.0, spec=GridSpec(nodes=257))], wave(2))
    assert pc1_norm(fine) == pytest.approx(2 * math.pi, rel=1e-4)
    assert pc1_norm(EnsembleProcess.zeros([grid], 2)) == 0.0
    assert pc1_norm(-2.5 * x) == pytest.approx(2.5 * pc1_norm(x), rel=1e-14)


def test_derivative_examples():
    g = OrbitGrid(1.0, [0.4])
    ramp = EnsembleProcess.from_function([g], lambda t: np.outer(t, [1.0, -2.0]))
    assert derivative(ramp).values[0] == pytest.approx(np.tile([1.0, -2.0], (g.n_nodes, 1)))
    fine = OrbitGrid(1.0, spec=GridSpec(nodes=257))
    x = EnsembleProcess.from_function([fine], wave(2))
    exact = np.outer(2 * math.pi * np.cos(2 * math.pi * fine.times), [1.0, 0.0])
    assert np.max(np.abs(derivative(x).values[0] - exact)) < 1e-3


def test_derivative_has_no_spike_at_jump():
    g = OrbitGrid(1.0, [0.5])
    step = lambda t: np.outer(np.where(np.asarray(t) < 0.5, 0.0, 1.0), [1.0, 0.0])  # noqa: E731
    vals = g.sample(step)
    vals[g.left_nodes] = 0.0
    vals[g.right_nodes] = [1.0, 0.0]
    d = derivative(EnsembleProcess((g,), (vals,))).values[0]
    assert np.max(np.abs(d)) < 1e-9


def test_inner_product_orthogonality(grid):
    fine = OrbitGrid(1.0, spec=GridSpec(nodes=2049))
    x = EnsembleProcess.from_function([fine], wave(1))
    y = EnsembleProcess.from_function([fine], wave(2))
    assert abs(inner_product(x, y)) < 1e-6
    assert inner_product(x, x) == pytest.approx(0.5, abs=1e-6)
    assert inner_product(2 * x, y) == pytest.approx(2 * inner_product(x, y), abs=1e-15)
    assert inner_product(EnsembleProcess.zeros([fine], 2), x) == 0.0


def test_integrate_constant(grid):
    x = EnsembleProcess.from_function([grid], const([2.0, -1.0]))
    assert integrate(x) == pytest.approx([2.0, -1.0])
    assert integrate(x, "simpson") == pytest.approx([2.0, -1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5))
def test_norm_axioms(seed, lam):
    rng = np.random.default_rng(seed)
    g = OrbitGrid(1.0, [0.37])
    x = EnsembleProcess.from_function([g], trial_function("sine", rng, 1.0, 2))
    y = EnsembleProcess.from_function([g], trial_function("cubic", rng, 1.0, 2))
    for norm in (pc_norm, pc1_norm):
        assert norm(x + y) <= norm(x) + norm(y) + 1e-12
        assert norm(lam * x) == pytest.approx(abs(lam) * norm(x), rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6))
def test_cauchy_schwarz_slack(seed, n):
    rng = np.random.default_rng(seed)
    grids = [OrbitGrid(1.0, sorted(rng.uniform(0.1, 0.9, rng.integers(0, 3))))
             if rng.random() < 0.5 else OrbitGrid(1.0) for _ in range(n)]
    try:
        x = EnsembleProcess(tuple(grids), tuple(rng.standard_normal((g.n_nodes, 2))
                                                for g in grids))
    except DomainError:
        return
    y = x.with_values([rng.standard_normal(v.shape) for v in x.values])
    assert expectation_cs_check(x, y) >= -1e-12
    assert expectation_cs_check(x, x) == pytest.approx(0.0, abs=1e-12)


def test_cs_single_orbit_is_equality(grid, rng):
    x = EnsembleProcess((grid,), (rng.standard_normal((grid.n_nodes, 2)),))
    y = EnsembleProcess((grid,), (rng.standard_normal((grid.n_nodes, 2)),))
    assert expectation_cs_check(x, y) == pytest.approx(0.0, abs=1e-12)


def test_cs_independent_ensembles_positive(grid, rng):
    x = EnsembleProcess((grid,) * 50, tuple(rng.standard_normal((grid.n_nodes, 2))
                                            for _ in range(50)))
    y = x.with_values([rng.standard_normal(v.shape) for v in x.values])
    assert expectation_cs_check(x, y) > 0


def test_dirichlet_flag_zeroes_ends(grid):
    x = EnsembleProcess.from_function([grid], const([1.0, 1.0]), dirichlet=True)
    assert np.all(x.values[0][[0, -1]] == 0.0)


def test_ensemble_validation(grid):
    with pytest.raises(DomainError):
        EnsembleProcess((), ())
    with pytest.raises(DomainError):
        EnsembleProcess((grid,), (np.zeros((3, 2)),))
    with pytest.raises(DomainError):
        EnsembleProcess((grid, OrbitGrid(2.0)), (np.zeros((65, 2)), np.zeros((65, 2))))
    a = EnsembleProcess.zeros([grid], 2)
    b = EnsembleProcess.zeros([OrbitGrid(1.0, [0.5])], 2)
    with pytest.raises(DomainError):
        inner_product(a, b)


def test_serialisation_round_trip(rng):
    g = OrbitGrid(1.0, [0.2, 0.7])
    x = EnsembleProcess((g,), (rng.standard_normal((g.n_nodes, 2)),))
    y = EnsembleProcess.from_dict(x.to_dict())
    assert np.array_equal(x.values[0], y.values[0]) and y.grids[0].same_as(g)


def test_estimate_K_single_mode_ratio(grid):
    x = EnsembleProcess.from_function([OrbitGrid(1.0, spec=GridSpec(nodes=1025))], wave(1),
                                      dirichlet=True)
    assert pc1_norm(x) / pc_norm(derivative(x)) == pytest.approx(1.0, rel=1e-5)


def test_estimate_K_properties():
    spec = GridSpec()
    ks = [estimate_K(spec, 1.0, samples=n, seed=3).lower_bound for n in (5, 20, 60)]
    assert ks[0] <= ks[1] <= ks[2]
    k = estimate_K(spec, 1.0, samples=60, seed=3)
    assert k.working == pytest.approx(1.05 * k.lower_bound)
    assert k.to_dict()["certified_upper_bound"] is None
    assert k.lower_bound >= 1.0
    assert estimate_K(spec, 1.0, "cubic", samples=10).lower_bound >= 1.0


def test_scale_invariant_ratio(grid, rng):
    x = EnsembleProcess.from_function([grid], trial_function("sine", rng, 1.0, 2), dirichlet=True)
    r1 = pc1_norm(x) / pc_norm(derivative(x))
    r2 = pc1_norm(7 * x) / pc_norm(derivative(7 * x))
    assert r1 == pytest.approx(r2, rel=1e-14)
