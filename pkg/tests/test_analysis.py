import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2tomo.analysis import (MAX_BRUTE_FORCE_SPINS, brute_force_solutions, build_defect_fixture,
                             cluster_charges, cut_value, detect_strong_clusters, enumerate_spins,
                             global_shift, ising_energy, is_solution, max_cut_bound, ray_charge,
                             ray_charges, relaxed_cut)
from v2tomo.model import BinaryImage, ModelError, RaySystem, SpinState, image_to_sigma
from v2tomo.problem import build_grid_rays, instance_from_image, make_instance, random_image

from oracles import edge_cut, kernel_relaxed_cut, naive_relaxed_cut, separated_clique_graph


def _random_state(n, rng):
    return SpinState(rng.choice([-1, 1], n), rng.uniform(-1, 1, n))


def test_ising_energy_examples():
    edge = np.array([[0, 1], [1, 0]])
    assert ising_energy(edge, [1, 1]) == 1
    assert ising_energy(edge, [1, -1]) == -1


def test_cut_value_examples(glider, glider_image):
    ray = make_instance(RaySystem(4, ((0, 1, 2, 3),)), [1])
    assert max_cut_bound(ray) == 9
    assert cut_value(ray, [1, 1, 1, 1]) == 0
    assert cut_value(glider, image_to_sigma(glider_image)) == 14
    assert max_cut_bound(glider) == 14
    empty = instance_from_image(BinaryImage.from_array(np.zeros((3, 3), int)))
    assert max_cut_bound(empty) == 54


def test_ray_charge_examples():
    full = make_instance(RaySystem(3, ((0, 1, 2),)), [3])
    assert ray_charge(full, [1, 1, 1], 0) == 0
    empty = make_instance(RaySystem(3, ((0, 1, 2),)), [0])
    assert ray_charge(empty, [1, 1, 1], 0) == 6
    one = make_instance(RaySystem(3, ((0, 1, 2),)), [1])
    assert ray_charge(one, [1, -1, -1], 0) == 0


def test_is_solution_examples(glider, glider_image):
    assert is_solution(glider, image_to_sigma(glider_image))
    empty = instance_from_image(BinaryImage.from_array(np.zeros((2, 3), int)))
    assert not is_solution(empty, np.ones(6, int))
    # swapping two rows with equal row sums keeps every projection
    image = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    inst = instance_from_image(BinaryImage.from_array(image))
    swapped = BinaryImage.from_array(image[[1, 0, 2]])
    assert is_solution(inst, image_to_sigma(swapped))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 16))
def test_ray_charge_parity(h, w, seed):
    inst = instance_from_image(random_image((h, w), 0.5, seed), seed)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        sigma = rng.choice([-1, 1], inst.node_count)
        q = ray_charges(inst, sigma)
        assert (q % 2 == 0).all()
        assert q[0] == ray_charge(inst, sigma, 0)


@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2 ** 16))
def test_cut_equals_separated_clique_cut(h, w, seed):
    inst = instance_from_image(random_image((h, w), 0.5, seed), seed)
    sigma = np.random.default_rng(seed).choice([-1, 1], inst.node_count)
    adj, spins = separated_clique_graph(inst, sigma)
    assert cut_value(inst, sigma) == edge_cut(adj, spins)


def test_is_solution_iff_cut_attains_bound_exhaustive():
    for seed in range(6):
        inst = instance_from_image(random_image((3, 4), 0.5, seed), seed)
        spins = enumerate_spins(inst.node_count)
        bound = max_cut_bound(inst)
        for sigma in spins:
            assert is_solution(inst, sigma) == (cut_value(inst, sigma) == bound)


def test_relaxed_cut_two_spin_hand_value():
    inst = make_instance(RaySystem(2, ((0, 1),)), [1])
    state = SpinState([1, -1], [0.5, -0.5])
    assert relaxed_cut(inst, state, scaled=False) == pytest.approx(0.5, abs=1e-12)
    closer = SpinState([1, -1], [0.25, -0.25])
    assert relaxed_cut(inst, closer, scaled=False) > relaxed_cut(inst, state, scaled=False)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 16), st.booleans())
def test_relaxed_cut_matches_oracles(h, w, seed, scaled):
    inst = instance_from_image(random_image((h, w), 0.5, seed), seed)
    state = _random_state(inst.node_count, np.random.default_rng(seed))
    value = relaxed_cut(inst, state, scaled)
    assert value == pytest.approx(naive_relaxed_cut(inst, state.sigma, state.x, scaled=scaled),
                                  abs=1e-9)
    assert value == pytest.approx(kernel_relaxed_cut(inst, state.sigma, state.x, scaled=scaled),
                                  abs=1e-9)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 16), st.floats(-1, 1))
def test_relaxed_cut_coincident_x_is_weighted_cut(h, w, seed, x0):
    inst = instance_from_image(random_image((h, w), 0.5, seed), seed)
    sigma = np.random.default_rng(seed).choice([-1, 1], inst.node_count)
    x0 = min(x0, 0.999)
    # the auxiliary spin sits at 0, so only x = 0 removes every continuous term
    state = SpinState(sigma, np.zeros(inst.node_count))
    q = ray_charges(inst, sigma)
    gap = inst.rays.lengths - inst.projections
    assert relaxed_cut(inst, state) == pytest.approx(
        float((inst.lambdas * (gap * gap - q * q / 4)).sum()), abs=1e-9)
    assert relaxed_cut(inst, state, scaled=False) == pytest.approx(cut_value(inst, sigma), abs=1e-9)
    shifted = global_shift(state, x0)
    assert relaxed_cut(inst, shifted, scaled=False) == pytest.approx(cut_value(inst, sigma), abs=1e-9)


def test_global_shift_examples(rng):
    state = _random_state(12, rng)
    same = global_shift(state, 0.0)
    assert np.array_equal(same.x, state.x) and np.array_equal(same.sigma, state.sigma)
    half = global_shift(state, 2.0)
    assert np.allclose(half.x, state.x, atol=1e-12)
    assert np.array_equal(half.sigma, -state.sigma)
    assert half.aux_sigma == -1 and half.aux_x == 0.0
    full = global_shift(state, 4.0)
    assert np.array_equal(full.sigma, state.sigma)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 16),
       st.floats(-10, 10, allow_nan=False))
def test_global_shift_invariance(h, w, seed, shift):
    inst = instance_from_image(random_image((h, w), 0.5, seed), seed)
    state = _random_state(inst.node_count, np.random.default_rng(seed))
    moved = global_shift(state, shift)
    assert np.all((moved.x >= -1) & (moved.x < 1))
    assert abs(relaxed_cut(inst, moved) - relaxed_cut(inst, state)) <= 1e-9
    # relaxed spins move by the shift modulo the period 4
    step = np.mod(moved.xi - state.xi - shift + 2, 4) - 2
    assert np.allclose(step, 0, atol=1e-9)


def test_shift_of_free_spins_alone_is_not_invariant():
    # the pinned auxiliary spin breaks the symmetry unless it moves too
    inst = make_instance(RaySystem(1, ((0,),)), [0])
    state = SpinState([1], [0.3])
    free_only = SpinState([1], [0.8])
    assert relaxed_cut(inst, free_only) != pytest.approx(relaxed_cut(inst, state))
    assert relaxed_cut(inst, global_shift(state, 0.5)) == pytest.approx(relaxed_cut(inst, state))


def test_detect_strong_clusters_examples():
    part = detect_strong_clusters(SpinState([1, 1, -1], [0.3, 0.3, -0.7]), tol=1e-6)
    assert [set(c.members) for c in part.clusters] == [{2}, {3}, {0, 1}]
    assert part.cluster_of(3).x == 0.0
    xs = np.array([-0.9, -0.5, 0.1, 0.6])
    part = detect_strong_clusters(SpinState([1, -1, 1, -1], xs))
    assert len(part) == 5
    assert [c.x for c in part.clusters] == sorted(c.x for c in part.clusters)
    with pytest.raises(ModelError):
        detect_strong_clusters(SpinState([1], [0.1]), tol=0)


def test_cluster_charges_sum_to_ray_charges(glider, rng):
    state = SpinState(rng.choice([-1, 1], 9), np.round(rng.uniform(-1, 1, 9), 1))
    part = detect_strong_clusters(state, tol=1e-6)
    total = sum(cluster_charges(glider, state, part))
    assert np.array_equal(total, ray_charges(glider, state.sigma))


def test_brute_force_examples(glider):
    one = instance_from_image(BinaryImage.from_array([[1]]))
    assert brute_force_solutions(one).solutions == {(1,)}
    diag = instance_from_image(BinaryImage.from_array([[1, 0], [0, 1]]))
    assert brute_force_solutions(diag).solutions == {(1, -1, -1, 1), (-1, 1, 1, -1)}
    result = brute_force_solutions(glider)
    assert result.solutions
    assert result.max_cut == 14
    assert all(cut_value(glider, s) == 14 for s in result.solutions)


def test_brute_force_guard():
    rays = build_grid_rays((1, MAX_BRUTE_FORCE_SPINS + 1))
    inst = make_instance(rays, np.ones(len(rays), int) * 0)
    with pytest.raises(ModelError):
        brute_force_solutions(inst)


def test_defect_fixture_properties():
    fx = build_defect_fixture()
    inst, sigma = fx.instance, fx.state.sigma
    q = ray_charges(inst, sigma)
    assert sorted(q.tolist()) == [-2, 0, 0, 2]
    base = cut_value(inst, sigma)
    for a in range(inst.node_count):
        flipped = sigma.copy()
        flipped[a] = -flipped[a]
        assert cut_value(inst, flipped) <= base
    pair = sigma.copy()
    pair[[fx.alpha, fx.beta]] *= -1
    assert is_solution(inst, pair)
    # alpha and beta sit above every other particle of their rays
    for r in inst.rays.membership[fx.alpha] + inst.rays.membership[fx.beta]:
        others = [fx.state.x[b] for b in inst.rays.rays[r] if b not in (fx.alpha, fx.beta)]
        top = min(fx.state.x[fx.alpha], fx.state.x[fx.beta])
        assert all(top > v for v in others + [0.0])
