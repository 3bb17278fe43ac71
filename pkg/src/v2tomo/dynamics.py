"""Relaxed-spin (V2) dynamics: drift, Euler integration with phase wrap,
random agitation and the restart loop of the machine."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .analysis import cut_value, ray_charges
from .model import (MachineConfig, ModelError, RunReport, SpinState,
                    TomographyInstance, VectorChargeTable)
from .problem import assemble_charges


class StepOverflowError(RuntimeError):
    """An Euler step would move some x by 2 or more (several wraps at once)."""


class DriftBuffer:
    """Ray layout, per-ray sort order and drift scratch space for one instance.

    The sort order persists between calls, which keeps re-sorting cheap while
    the relaxed spins move by small steps.
    """

    def __init__(self, instance: TomographyInstance, scaled: bool = True):
        rays = instance.rays
        self.instance = instance
        self.scaled = scaled
        self.ptr = rays.ptr
        self.nodes = rays.nodes
        self.q0 = instance.spin_data.astype(np.float64)
        self.lam = np.ascontiguousarray(
            instance.lambdas if scaled else np.ones(instance.ray_count), dtype=np.float64)
        self.order = _kernels.new_order(self.ptr)
        self.xdot = np.zeros(instance.node_count)

    def drift(self, state: SpinState) -> np.ndarray:
        _kernels.drift(state.x, state.sigma, self.ptr, self.nodes, self.q0, self.lam,
                       self.order, self.xdot, float(state.aux_x), int(state.aux_sigma))
        return self.xdot.copy()

    def relaxed_cut(self, state: SpinState) -> float:
        return float(_kernels.relaxed_cut(state.x, state.sigma, self.ptr, self.nodes, self.q0,
                                          self.lam, self.order, float(state.aux_x),
                                          int(state.aux_sigma)))

    def step(self, state: SpinState, dt: float) -> int:
        """Advance ``state`` in place by one Euler step; return the flip count."""
        _require_pinned(state)
        flips = _kernels.euler_step(state.x, state.sigma, self.ptr, self.nodes, self.q0,
                                    self.lam, self.order, self.xdot, dt)
        if flips < 0:
            raise StepOverflowError(
                f"|dx/dt| * dt reached {np.abs(self.xdot).max() * dt:.3g} >= 2; reduce dt")
        return int(flips)

    def evolve(self, state: SpinState, dt: float, steps: int, stride: int = 0):
        """Advance ``state`` in place; return (status, steps_done, flips, trace)."""
        _require_pinned(state)
        trace = np.empty(steps // stride + 2 if stride else 0)
        status, done, flips, samples = _kernels.evolve(
            state.x, state.sigma, self.ptr, self.nodes, self.q0, self.lam, self.order,
            self.xdot, dt, steps, stride, trace)
        return status, done, flips, trace[:samples]


def _require_pinned(state: SpinState):
    if not state.aux_pinned:
        raise ModelError("the dynamics require the auxiliary spin at sigma=1, x=0")


def _buffer_for(charges: VectorChargeTable, state: SpinState) -> DriftBuffer:
    if not np.array_equal(charges.sigma, state.sigma):
        raise ModelError("charge table was assembled for a different sigma")
    return DriftBuffer(charges.instance, charges.scaled)


def drift(state: SpinState, charges: VectorChargeTable) -> np.ndarray:
    """dX_a/dt = q_a . eps(X_a) for every free spin.

    eps(X) sums the vector charges below X minus those above X, the auxiliary
    spin included; particles at exactly the same X do not act on each other.
    """
    return _buffer_for(charges, state).drift(state)


def euler_step(state: SpinState, charges: VectorChargeTable, dt: float):
    """One Euler step with the phase-wrap rule.

    Returns ``(new_state, new_charges, flips)``; the charge table is
    reassembled only when some sigma flipped.
    """
    if not dt > 0:
        raise ModelError("dt must be positive")
    new = state.copy()
    flips = _buffer_for(charges, state).step(new, dt)
    if flips:
        charges = assemble_charges(charges.instance, new.sigma, charges.scaled)
    return new, charges, flips


@dataclass
class StageResult:
    state: SpinState
    flips: int
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))


def evolve_stage(state: SpinState, instance: TomographyInstance, stage_time: float, steps: int,
                 stride: int = 0, scaled: bool = True,
                 buffer: DriftBuffer | None = None) -> StageResult:
    """``steps`` Euler steps spanning ``stage_time``, from a copy of ``state``.

    With ``stride > 0`` the relaxed cut is sampled before the first step,
    every ``stride`` steps and after the last step.
    """
    if not stage_time > 0 or steps < 1:
        raise ModelError("need stage_time > 0 and steps >= 1")
    buffer = buffer or DriftBuffer(instance, scaled)
    new = state.copy()
    dt = stage_time / steps
    status, done, flips, trace = buffer.evolve(new, dt, steps, stride)
    if status == _kernels.STEP_OVERFLOW:
        raise StepOverflowError(f"step overflow after {done} of {steps} steps (dt = {dt:.3g})")
    return StageResult(new, flips, trace)


def agitate(state: SpinState, rng: np.random.Generator) -> SpinState:
    """Resample every free x uniformly on [-1, 1); sigma is kept."""
    return SpinState(state.sigma.copy(), rng.uniform(-1.0, 1.0, state.size))


def random_state(n: int, rng: np.random.Generator) -> SpinState:
    sigma = rng.choice(np.array([-1, 1]), size=n)
    return SpinState(sigma, rng.uniform(-1.0, 1.0, n))


def run_machine(instance: TomographyInstance, config: MachineConfig,
                initial_state: SpinState | None = None) -> RunReport:
    """Randomly agitated machine: evolve a stage, stop if the data are met,
    otherwise agitate and try again, up to ``config.max_agitations`` times."""
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    state = random_state(instance.node_count, rng)
    if initial_state is not None:
        state = initial_state.copy()
    _require_pinned(state)
    buffer = DriftBuffer(instance)
    dt = config.dt
    steps = config.steps_per_stage
    stride = config.trace_stride

    report = RunReport(False, 0, state.sigma, ray_charges(instance, state.sigma))
    agitations = 0
    while True:
        status, done, flips, trace = buffer.evolve(state, dt, steps, stride)
        t0 = report.steps * dt
        report.steps += done
        report.flips += flips
        if stride:
            times = t0 + dt * np.minimum(np.arange(trace.size) * stride, done)
            report.cut_trace.extend(zip(times.tolist(), trace.tolist()))
        if status == _kernels.STEP_OVERFLOW:
            report.error = f"step overflow after {report.steps} steps (dt = {dt:.3g})"
            break
        report.stage_cuts.append(cut_value(instance, state.sigma))
        residuals = ray_charges(instance, state.sigma)
        if not residuals.any():
            report.solved = True
            break
        if agitations >= config.max_agitations:
            break
        state = agitate(state, rng)
        agitations += 1

    report.agitations_used = agitations
    report.final_sigma = state.sigma.copy()
    report.residuals = ray_charges(instance, state.sigma)
    report.elapsed = time.perf_counter() - started
    return report


def drift_rate_of_subset(state: SpinState, charges: VectorChargeTable,
                         subset: Iterable[int]) -> float:
    subset = np.fromiter(subset, dtype=np.int64)
    if subset.size == 0:
        raise ModelError("subset must be nonempty")
    return float(drift(state, charges)[subset].sum())
