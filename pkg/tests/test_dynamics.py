import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from v2tomo.analysis import (build_defect_fixture, cluster_charges, cut_value,
                             detect_strong_clusters, max_cut_bound, relaxed_cut)
from v2tomo.dynamics import (DriftBuffer, StepOverflowError, agitate, drift,
                             drift_rate_of_subset, euler_step, evolve_stage, random_state,
                             run_machine)
from v2tomo.model import (BinaryImage, MachineConfig, ModelError, RaySystem, SpinState,
                          image_to_sigma)
from v2tomo.problem import assemble_charges, instance_from_image, make_instance, random_image

from oracles import kernel_drift, naive_aux_drift, naive_drift


def _instance(h, w, seed, density=0.5):
    return instance_from_image(random_image((h, w), density, seed), seed)


def _state(n, seed):
    return random_state(n, np.random.default_rng(seed))


def test_drift_examples():
    pair = make_instance(RaySystem(2, ((0, 1),)), [1])
    state = SpinState([1, -1], [0.5, -0.5])
    xdot = drift(state, assemble_charges(pair, state.sigma, scaled=False))
    assert xdot.tolist() == [-1.0, 1.0]
    single = make_instance(RaySystem(1, ((0,),)), [0])
    state = SpinState([1], [0.3])
    assert drift(state, assemble_charges(single, state.sigma, scaled=False)).tolist() == [1.0]


def test_drift_vanishes_when_all_coincide(glider):
    state = SpinState(np.ones(9, int), np.zeros(9))
    assert not drift(state, assemble_charges(glider, state.sigma)).any()


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 16), st.booleans())
def test_buffered_drift_matches_naive_and_kernel_oracles(h, w, seed, scaled):
    inst = _instance(h, w, seed)
    state = _state(inst.node_count, seed)
    fast = drift(state, assemble_charges(inst, state.sigma, scaled))
    assert np.allclose(fast, naive_drift(inst, state.sigma, state.x, scaled), atol=1e-12, rtol=0)
    assert np.allclose(fast, kernel_drift(inst, state.sigma, state.x, scaled), atol=1e-12, rtol=0)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 16))
def test_drift_with_ties_matches_naive(h, w, seed):
    inst = _instance(h, w, seed)
    rng = np.random.default_rng(seed)
    # x on a coarse lattice forces exact coincidences, the auxiliary spin included
    state = SpinState(rng.choice([-1, 1], inst.node_count),
                      rng.integers(-2, 3, inst.node_count) / 4)
    fast = drift(state, assemble_charges(inst, state.sigma))
    assert np.allclose(fast, naive_drift(inst, state.sigma, state.x), atol=1e-12, rtol=0)
    assert np.allclose(fast, kernel_drift(inst, state.sigma, state.x), atol=1e-12, rtol=0)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 16))
def test_drift_is_twice_the_relaxed_cut_gradient(h, w, seed):
    inst = _instance(h, w, seed)
    state = _state(inst.node_count, seed)
    xdot = DriftBuffer(inst).drift(state)
    eps = 1e-7
    gaps = np.abs(np.subtract.outer(np.append(state.x, 0.0), np.append(state.x, 0.0)))
    if gaps[~np.eye(gaps.shape[0], dtype=bool)].min() < 10 * eps or np.abs(state.x).max() > 1 - eps:
        return  # finite differences would straddle a kink
    for a in range(inst.node_count):
        up, down = state.copy(), state.copy()
        up.x[a] += eps
        down.x[a] -= eps
        grad = (relaxed_cut(inst, up) - relaxed_cut(inst, down)) / (2 * eps)
        assert xdot[a] == pytest.approx(2 * grad, abs=1e-5)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 16))
def test_drift_antisymmetry_with_auxiliary(h, w, seed):
    inst = _instance(h, w, seed)
    state = _state(inst.node_count, seed)
    total = DriftBuffer(inst).drift(state).sum()
    assert total == pytest.approx(-naive_aux_drift(inst, state.sigma, state.x), abs=1e-9)


def test_euler_step_wrap_examples():
    # one node, one ray with P=0, so the drift is exactly +1 from the auxiliary at 0
    inst = make_instance(RaySystem(1, ((0,),)), [0])
    charges = assemble_charges(inst, [1], scaled=False)
    new, new_charges, flips = euler_step(SpinState([1], [0.95]),
                                         assemble_charges(inst, [1]), 0.10 / inst.lambdas[0])
    assert flips == 1 and new.sigma.tolist() == [-1]
    assert new.x[0] == pytest.approx(-0.95)
    assert new_charges.sigma.tolist() == [-1]
    # below the auxiliary spin the same charge pushes it further down
    state = SpinState([1], [-0.99])
    rate = drift(state, assemble_charges(inst, [1]))[0]
    assert rate < 0
    new, _, flips = euler_step(state, assemble_charges(inst, [1]), 0.02 / abs(rate))
    assert flips == 1 and new.sigma.tolist() == [-1]
    assert new.x[0] == pytest.approx(0.99)
    still, _, flips = euler_step(SpinState([1], [0.0]), charges, 0.1)
    assert flips == 0 and still.x.tolist() == [0.0]


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 16),
       st.floats(1e-4, 0.05))
def test_wrap_rule_flips_exactly_on_crossings(h, w, seed, dt):
    inst = _instance(h, w, seed)
    state = _state(inst.node_count, seed)
    xdot = DriftBuffer(inst).drift(state)
    target = state.x + dt * xdot
    crossed = (target >= 1) | (target < -1)
    buf = DriftBuffer(inst)
    new = state.copy()
    flips = buf.step(new, dt)
    assert flips == crossed.sum()
    assert np.array_equal(new.sigma != state.sigma, crossed)
    assert np.all((new.x >= -1) & (new.x < 1))
    assert np.allclose(np.where(crossed, new.x + 2 * np.sign(target), new.x), target, atol=1e-12)


def test_step_overflow():
    inst = make_instance(RaySystem(1, ((0,),)), [0])
    with pytest.raises(StepOverflowError):
        euler_step(SpinState([1], [0.1]), assemble_charges(inst, [1]), 3.0)
    with pytest.raises(StepOverflowError):
        evolve_stage(SpinState([1], [0.1]), inst, stage_time=30.0, steps=10)
    report = run_machine(inst, MachineConfig(stage_time=30.0, steps_per_stage=10))
    assert not report.solved and "overflow" in report.error


def test_euler_step_rejects_stale_charges(glider):
    state = _state(9, 0)
    with pytest.raises(ModelError):
        euler_step(state, assemble_charges(glider, -state.sigma), 0.01)


def test_dynamics_refuse_a_moved_auxiliary(glider):
    state = SpinState(np.ones(9, int), np.zeros(9), aux_sigma=1, aux_x=0.5)
    with pytest.raises(ModelError):
        DriftBuffer(glider).step(state, 0.01)


def test_evolve_stage_equilibrium_is_fixed():
    # one ray with P = 1 has q0 = 0; coincident opposite charges exert no force
    inst = make_instance(RaySystem(2, ((0, 1),)), [1])
    state = SpinState([1, -1], [0.4, 0.4])
    out = evolve_stage(state, inst, stage_time=5.0, steps=600)
    assert np.array_equal(out.state.x, state.x) and np.array_equal(out.state.sigma, state.sigma)


def test_single_pixel_flips_near_expected_time():
    inst = make_instance(RaySystem(1, ((0,),)), [0])
    state = SpinState([1], [0.3])
    buf = DriftBuffer(inst, scaled=False)
    dt = 0.001
    for k in range(5000):
        if buf.step(state, dt):
            break
    assert k * dt == pytest.approx(0.7, abs=2 * dt)
    assert state.sigma.tolist() == [-1]
    out = evolve_stage(SpinState([1], [0.3]), inst, stage_time=5.0, steps=600)
    assert out.state.sigma.tolist() == [-1]


def test_evolve_stage_trace_sampling(glider):
    out = evolve_stage(_state(9, 1), glider, stage_time=1.0, steps=100, stride=30)
    assert out.trace.size == 1 + 3 + 1
    assert out.trace[-1] == pytest.approx(relaxed_cut(glider, out.state))


def test_evolve_stage_is_deterministic(glider):
    a = evolve_stage(_state(9, 4), glider, 5.0, 600)
    b = evolve_stage(_state(9, 4), glider, 5.0, 600)
    assert np.array_equal(a.state.x, b.state.x) and np.array_equal(a.state.sigma, b.state.sigma)


def test_agitate_examples(glider):
    state = _state(9, 2)
    out1 = agitate(state, np.random.default_rng(5))
    out2 = agitate(state, np.random.default_rng(5))
    assert np.array_equal(out1.sigma, state.sigma)
    assert np.all((out1.x >= -1) & (out1.x < 1))
    assert np.array_equal(out1.x, out2.x)
    assert out1.aux_pinned


def test_run_machine_forced_all_on():
    image = BinaryImage.from_array(np.ones((4, 4), int))
    inst = instance_from_image(image)
    for seed in range(5):
        report = run_machine(inst, MachineConfig(seed=seed))
        assert report.solved
        assert report.final_sigma.tolist() == [1] * 16
        assert not report.residuals.any()


def test_run_machine_stationary_start_stays_unsolved(glider):
    sigma = -image_to_sigma(BinaryImage.from_array([[0, 1, 0], [0, 0, 1], [1, 1, 1]]))
    start = SpinState(sigma, np.zeros(9))
    report = run_machine(glider, MachineConfig(max_agitations=0), initial_state=start)
    assert not report.solved
    assert report.agitations_used == 0
    assert report.flips == 0


def test_run_machine_report_invariants(glider):
    for seed in range(20):
        config = MachineConfig(seed=seed, max_agitations=3, trace_stride=50)
        report = run_machine(glider, config)
        assert report.agitations_used <= config.max_agitations
        assert report.solved == (not report.residuals.any())
        assert len(report.stage_cuts) == report.agitations_used + 1
        times = [t for t, _ in report.cut_trace]
        assert times == sorted(times)
        assert report.steps == 600 * (report.agitations_used + 1)


def test_glider_success_rate(glider):
    solved = sum(run_machine(glider, MachineConfig(seed=s)).solved for s in range(100))
    assert solved >= 95


def test_agitation_never_lowers_the_stage_cut():
    for seed in range(30):
        inst = _instance(6, 6, seed)
        report = run_machine(inst, MachineConfig(seed=seed, max_agitations=10))
        cuts = report.stage_cuts
        assert all(b >= a for a, b in zip(cuts, cuts[1:]))


def test_defect_pair_drift_rate():
    fx = build_defect_fixture()
    charges = assemble_charges(fx.instance, fx.state.sigma)
    expected = charges.vector(fx.alpha) + charges.vector(fx.beta)
    rate = drift_rate_of_subset(fx.state, charges, [fx.alpha, fx.beta])
    assert rate == pytest.approx(expected @ expected, abs=1e-9)
    assert rate > 0
    with pytest.raises(ModelError):
        drift_rate_of_subset(fx.state, charges, [])


def test_subset_rate_vanishes_at_coincident_state(glider):
    state = SpinState(np.ones(9, int), np.zeros(9))
    charges = assemble_charges(glider, state.sigma)
    assert drift_rate_of_subset(state, charges, range(9)) == 0


@pytest.mark.parametrize("q,interior,outside", [
    (1, [1, -1, 1], []), (1, [1], [-1, -1]), (-1, [-1, -1, 1], [1]), (1, [1, 1, -1, 1], [-1, 1, 1]),
])
def test_weak_cluster_separation_rate(q, interior, outside):
    # single ray: outside particles and the auxiliary spin sit below the cluster,
    # whose marginal particles carry charge q and whose top member is topmost
    sigma = outside + [q] + interior + [q]
    xs = np.concatenate([np.linspace(-0.9, -0.1, len(outside)),
                         np.linspace(0.2, 0.8, len(interior) + 2)])
    n = len(sigma)
    inst = make_instance(RaySystem(n, (tuple(range(n)),)), [0])
    cluster_charge = 2 * q + sum(interior)
    assert abs(cluster_charge) >= 2
    state = SpinState(sigma, xs)
    xdot = drift(state, assemble_charges(inst, state.sigma, scaled=False))
    bottom = len(outside)
    assert xdot[-1] - xdot[bottom] == 2 * q * (q + sum(interior))


def test_strong_clusters_of_solved_single_ray_are_neutral():
    inst = make_instance(RaySystem(6, (tuple(range(6)),)), [2])
    checked = 0
    for seed in range(10):
        out = evolve_stage(_state(6, seed), inst, stage_time=20.0, steps=20000)
        if cut_value(inst, out.state.sigma) != max_cut_bound(inst):
            continue
        part = detect_strong_clusters(out.state, tol=1e-2)
        for charge, cluster in zip(cluster_charges(inst, out.state, part), part.clusters):
            if part.aux not in cluster.members:
                assert charge.sum() == 0
        checked += 1
    assert checked >= 5


def _worst_step_drop(steps, seeds=range(5)):
    worst = 0.0
    for seed in seeds:
        inst = _instance(5, 5, seed)
        report = run_machine(inst, MachineConfig(5.0, steps, 0, seed=seed, trace_stride=1))
        cuts = np.array([c for _, c in report.cut_trace])
        worst = min(worst, np.diff(cuts).min())
    return -worst


def test_euler_cut_drops_shrink_with_the_step():
    # the flow ascends the relaxed cut; Euler overshoots its kinks by O(dt)
    coarse, fine = _worst_step_drop(300), _worst_step_drop(3000)
    assert coarse > 0
    assert fine <= coarse / 4
