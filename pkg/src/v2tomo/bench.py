"""Success-probability experiments and the 3D reconstruction demo.

Every random choice derives from the master seed and the cell coordinates
(size, image index, restart index), never from scheduling, so a table is
identical whatever the number of worker threads.  The compiled kernels
release the GIL, which is what makes threads worthwhile here.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .analysis import is_solution
from .dynamics import run_machine
from .localsearch import sample_local_search
from .model import BinaryImage, MachineConfig, ModelError, RunReport, TomographyInstance, sigma_to_image
from .problem import instance_from_image, project, random_image

CSV_COLUMNS = ("experiment", "W", "T", "method", "restarts", "successes", "p_succ",
               "ci_lo", "ci_hi", "mean_agitations", "wall_ms")
KINDS = ("size_sweep", "t_sweep", "three_d_demo")
MAX_DEMO_VOXELS = 2048
T_SWEEP_AGITATIONS = 5
T_SWEEP_STEPS = 600
# stages must be longer in 3D: every voxel sits on three rays
THREE_D_CONFIG = MachineConfig(stage_time=10.0, steps_per_stage=1200, max_agitations=50)
# agitation keeps sigma, so a chain stuck one defect short needs a fresh start
THREE_D_RESTARTS = 4

# stream tags keep the seed families of one master seed apart
_IMAGE, _LAMBDA, _RESTART, _LOCAL = range(4)


def derive_seed(master: int, *key: int) -> int:
    seq = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0])


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n < 1 or not 0 <= successes <= n:
        raise ModelError("need n >= 1 and 0 <= successes <= n")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the bounds touch 0 and 1 exactly at the endpoints; rounding would leave a sliver
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class SuccessEstimate:
    restarts: int
    successes: int
    mean_agitations: float | None = None

    @property
    def p_succ(self) -> float:
        return self.successes / self.restarts

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.restarts)

    def __add__(self, other: "SuccessEstimate") -> "SuccessEstimate":
        n = self.restarts + other.restarts
        agit = None
        if self.mean_agitations is not None and other.mean_agitations is not None:
            agit = (self.mean_agitations * self.restarts
                    + other.mean_agitations * other.restarts) / n
        return SuccessEstimate(n, self.successes + other.successes, agit)


def _run(task) -> tuple[bool, int]:
    instance, config = task
    report = run_machine(instance, config)
    # the loop's own flag is not trusted
    return is_solution(instance, report.final_sigma), report.agitations_used


def _map(tasks, workers: int):
    if workers <= 1:
        return [_run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, tasks))


def _estimate(outcomes) -> SuccessEstimate:
    return SuccessEstimate(len(outcomes), sum(ok for ok, _ in outcomes),
                           sum(a for _, a in outcomes) / len(outcomes))


def sample_success_v2(instance: TomographyInstance, restarts: int, config: MachineConfig,
                      workers: int = 1, key: Sequence[int] = ()) -> SuccessEstimate:
    """Run the machine from ``restarts`` derived seeds and count verified solutions.

    Restart k uses the seed derived from ``(config.seed, *key, k)``.
    """
    if restarts < 1:
        raise ModelError("restarts must be >= 1")
    tasks = [(instance, replace(config, seed=derive_seed(config.seed, *key, k)))
             for k in range(restarts)]
    return _estimate(_map(tasks, workers))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    sizes: tuple = ()
    t_grid: tuple[float, ...] = ()
    images_per_size: int = 5
    restarts: int = 100
    local_search_restarts: int = 10_000
    config: MachineConfig = field(default_factory=MachineConfig)
    master_seed: int = 0
    density: float = 0.5
    methods: tuple[str, ...] = ("v2", "local_search")
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown experiment kind {self.kind!r}")
        if not self.sizes:
            raise ModelError("sizes must be nonempty")
        if self.kind == "t_sweep":
            if not self.t_grid:
                raise ModelError("t_grid must be nonempty")
            if any(not 0 < t <= 6 for t in self.t_grid):
                raise ModelError("t_grid values must lie in (0, 6]")
        if self.restarts < 1 or self.local_search_restarts < 1 or self.images_per_size < 1:
            raise ModelError("restarts and images_per_size must be >= 1")
        if not set(self.methods) <= {"v2", "local_search"} or not self.methods:
            raise ModelError("methods must be a nonempty subset of {v2, local_search}")
        if not 0 <= self.density <= 1:
            raise ModelError("density must lie in [0, 1]")


def _grid_instance(spec: ExperimentSpec, dims: tuple[int, ...], image_index: int):
    size_key = math.prod(dims)
    image = random_image(dims, spec.density,
                         derive_seed(spec.master_seed, _IMAGE, size_key, image_index))
    return instance_from_image(image, derive_seed(spec.master_seed, _LAMBDA, size_key, image_index))


def _row(spec, experiment, size, T, method, est: SuccessEstimate, started) -> dict:
    lo, hi = est.ci
    return {
        "experiment": experiment,
        "W": size,
        "T": "" if T is None else f"{T:g}",
        "method": method,
        "restarts": est.restarts,
        "successes": est.successes,
        "p_succ": f"{est.p_succ:.6f}",
        "ci_lo": f"{lo:.6f}",
        "ci_hi": f"{hi:.6f}",
        "mean_agitations": "" if est.mean_agitations is None else f"{est.mean_agitations:.4f}",
        "wall_ms": f"{(time.perf_counter() - started) * 1e3:.1f}" if spec.timing else "",
    }


def _v2_tasks(spec, config, dims, instances):
    size_key = math.prod(dims)
    return [(inst, replace(config, seed=derive_seed(spec.master_seed, _RESTART, size_key, i, k)))
            for i, inst in enumerate(instances) for k in range(spec.restarts)]


def size_sweep(spec: ExperimentSpec) -> list[dict]:
    """Pooled P_succ over ``images_per_size`` random W x W images per size."""
    rows = []
    for W in spec.sizes:
        dims = (int(W), int(W))
        instances = [_grid_instance(spec, dims, i) for i in range(spec.images_per_size)]
        if "v2" in spec.methods:
            started = time.perf_counter()
            est = _estimate(_map(_v2_tasks(spec, spec.config, dims, instances), spec.workers))
            rows.append(_row(spec, "size_sweep", W, spec.config.stage_time, "v2", est, started))
        if "local_search" in spec.methods:
            started = time.perf_counter()
            est = SuccessEstimate(0, 0)
            for i, inst in enumerate(instances):
                seed = derive_seed(spec.master_seed, _LOCAL, W * W, i)
                sample = sample_local_search(inst, spec.local_search_restarts, seed)
                est = SuccessEstimate(est.restarts + sample.restarts,
                                      est.successes + sample.successes)
            rows.append(_row(spec, "size_sweep", W, None, "local_search", est, started))
    return rows


def t_sweep(spec: ExperimentSpec) -> list[dict]:
    """V2 success against stage time with M and the agitation budget held fixed."""
    rows = []
    for W in spec.sizes:
        dims = (int(W), int(W))
        instances = [_grid_instance(spec, dims, i) for i in range(spec.images_per_size)]
        for T in spec.t_grid:
            config = replace(spec.config, stage_time=float(T), steps_per_stage=T_SWEEP_STEPS,
                             max_agitations=T_SWEEP_AGITATIONS)
            started = time.perf_counter()
            est = _estimate(_map(_v2_tasks(spec, config, dims, instances), spec.workers))
            rows.append(_row(spec, "t_sweep", W, T, "v2", est, started))
    return rows


@dataclass
class DemoResult:
    original: BinaryImage
    reconstruction: BinaryImage
    residuals: np.ndarray
    report: RunReport
    instance: TomographyInstance
    attempts: int = 1

    @property
    def verified(self) -> bool:
        """Projections of the reconstruction equal the input projections."""
        return bool(np.array_equal(project(self.reconstruction, self.instance.rays),
                                   self.instance.projections))


def three_d_demo(dims: Sequence[int], density: float, seed: int,
                 config: MachineConfig = THREE_D_CONFIG,
                 restarts: int = THREE_D_RESTARTS) -> DemoResult:
    """Reconstruct a seeded random volume from its three axis projections.

    Layers are independent Bernoulli fills.  The reconstruction need not equal
    the original, only share its projections.  A run that spends its whole
    agitation budget is followed by a fresh run from a new random state, at
    most ``restarts`` runs in all; ``report`` is the last run.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ModelError("the 3D demo needs three dimensions")
    if math.prod(dims) > MAX_DEMO_VOXELS:
        raise ModelError(f"volume of {math.prod(dims)} voxels exceeds {MAX_DEMO_VOXELS}")
    original = random_image(dims, density, derive_seed(seed, _IMAGE))
    instance = instance_from_image(original, derive_seed(seed, _LAMBDA))
    if restarts < 1:
        raise ModelError("restarts must be >= 1")
    for attempt in range(restarts):
        report = run_machine(instance, replace(config, seed=derive_seed(seed, _RESTART, attempt)))
        if report.solved:
            break
    reconstruction = sigma_to_image(report.final_sigma, dims)
    return DemoResult(original, reconstruction, report.residuals, report, instance, attempt + 1)


def _demo_task(task) -> tuple[bool, int]:
    dims, density, seed, config, restarts = task
    result = three_d_demo(dims, density, seed, config, restarts)
    spent = (result.attempts - 1) * config.max_agitations + result.report.agitations_used
    return result.verified, spent


def three_d_sweep(spec: ExperimentSpec) -> list[dict]:
    """One row per volume size; ``spec.restarts`` caps the fresh runs per volume."""
    rows = []
    for dims in spec.sizes:
        dims = tuple(int(d) for d in dims)
        started = time.perf_counter()
        tasks = [(dims, spec.density, derive_seed(spec.master_seed, math.prod(dims), i),
                  spec.config, spec.restarts) for i in range(spec.images_per_size)]
        if spec.workers <= 1:
            outcomes = [_demo_task(t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                outcomes = list(pool.map(_demo_task, tasks))
        rows.append(_row(spec, "three_d_demo", "x".join(map(str, reversed(dims))),
                         spec.config.stage_time, "v2", _estimate(outcomes), started))
    return rows


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    return {"size_sweep": size_sweep, "t_sweep": t_sweep,
            "three_d_demo": three_d_sweep}[spec.kind](spec)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
