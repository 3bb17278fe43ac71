"""Objective functions, residual charges and verification oracles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (BinaryImage, ModelError, SpinState, TomographyInstance)
from .problem import build_grid_rays_2d, make_instance, project

MAX_BRUTE_FORCE_SPINS = 20


def ising_energy(adjacency, sigma) -> float:
    """H = 1/2 sum_mn A_mn s_m s_n."""
    adjacency = np.asarray(adjacency)
    sigma = np.asarray(sigma)
    return 0.5 * float(sigma @ adjacency @ sigma)


def adjacency_cut(adjacency, sigma) -> float:
    """C = 1/4 sum_mn A_mn (1 - s_m s_n), evaluated edge by edge."""
    adjacency = np.asarray(adjacency)
    sigma = np.asarray(sigma)
    return 0.25 * float((adjacency * (1 - np.outer(sigma, sigma))).sum())


def ray_charges(instance: TomographyInstance, sigma) -> np.ndarray:
    """Q(r; sigma) for every ray, as exact integers."""
    sigma = np.asarray(sigma, dtype=np.int64).reshape(-1)
    if sigma.size != instance.node_count:
        raise ModelError(f"{sigma.size} spins given for {instance.node_count} nodes")
    rays = instance.rays
    return np.add.reduceat(sigma[rays.nodes], rays.ptr[:-1]) + instance.spin_data


def ray_charge(instance: TomographyInstance, sigma, r: int) -> int:
    sigma = np.asarray(sigma, dtype=np.int64)
    ray = np.fromiter(instance.rays.rays[r], dtype=np.int64)
    return int(sigma[ray].sum() + instance.spin_data[r])


def max_cut_bound(instance: TomographyInstance) -> int:
    """Sum over rays of (N - P)^2, the cut every solution attains."""
    gap = instance.rays.lengths - instance.projections
    return int((gap * gap).sum())


def cut_value(instance: TomographyInstance, sigma) -> int:
    q = ray_charges(instance, sigma)
    return max_cut_bound(instance) - int((q * q).sum()) // 4


def is_solution(instance: TomographyInstance, sigma) -> bool:
    return not ray_charges(instance, sigma).any()


def _kernel_args(instance: TomographyInstance, scaled: bool):
    rays = instance.rays
    lam = instance.lambdas if scaled else np.ones(instance.ray_count)
    return (rays.ptr, rays.nodes, instance.spin_data.astype(np.float64),
            np.ascontiguousarray(lam, dtype=np.float64), _kernels.new_order(rays.ptr))


def relaxed_cut(instance: TomographyInstance, state: SpinState, scaled: bool = True) -> float:
    """Relaxed cut of the relaxed-spin state, auxiliary spin included.

    With all x equal the continuous term vanishes and the value reduces to
    sum_r lambda(r) [(N - P)^2 - Q(r)^2 / 4] (the plain cut when unscaled).
    """
    ptr, nodes, q0, lam, order = _kernel_args(instance, scaled)
    return float(_kernels.relaxed_cut(state.x, state.sigma, ptr, nodes, q0, lam, order,
                                      float(state.aux_x), int(state.aux_sigma)))


def _shift_wrapped(x, sigma, shift: float):
    """x + shift brought back into [-1, 1), flipping sigma once per crossing."""
    k = np.floor((x + shift + 1.0) / 2.0)
    x = x + (shift - 2.0 * k)
    # rounding can leave x just outside the interval
    up = x >= 1.0
    down = x < -1.0
    x = np.where(up, x - 2.0, np.where(down, x + 2.0, x))
    k = k.astype(np.int64) + up - down
    return x, np.where(k % 2 == 1, -sigma, sigma)


def global_shift(state: SpinState, shift: float) -> SpinState:
    """Translate every relaxed spin, the auxiliary one included, by ``shift``.

    The relaxed cut depends only on differences of relaxed spins modulo the
    kernel period, so it is unchanged.  The returned state carries the moved
    auxiliary spin and therefore cannot be fed back to the dynamics.
    """
    x, sigma = _shift_wrapped(state.x, state.sigma, shift)
    ax, asig = _shift_wrapped(np.array([state.aux_x]), np.array([state.aux_sigma]), shift)
    return SpinState(sigma, x, int(asig[0]), float(ax[0]))


@dataclass(frozen=True)
class StrongCluster:
    members: frozenset[int]
    x: float


@dataclass(frozen=True)
class ClusterPartition:
    """Strong clusters ordered by increasing x.

    The auxiliary spin appears as node index ``aux`` (= node count).
    """

    clusters: tuple[StrongCluster, ...]
    aux: int

    def __len__(self):
        return len(self.clusters)

    def cluster_of(self, node: int) -> StrongCluster:
        for c in self.clusters:
            if node in c.members:
                return c
        raise KeyError(node)


def detect_strong_clusters(state: SpinState, tol: float | None = None) -> ClusterPartition:
    n = state.size
    if tol is None:
        tol = 1e-9 * max(n, 1)
    if tol <= 0:
        raise ModelError("tol must be positive")
    xs = np.append(state.x, state.aux_x)
    order = np.argsort(xs, kind="stable")
    breaks = np.flatnonzero(np.diff(xs[order]) > tol) + 1
    clusters = []
    for group in np.split(order, breaks):
        clusters.append(StrongCluster(frozenset(int(a) for a in group), float(xs[group].mean())))
    return ClusterPartition(tuple(clusters), n)


def cluster_charges(instance: TomographyInstance, state: SpinState,
                    partition: ClusterPartition) -> list[np.ndarray]:
    """Unscaled vector charge (one entry per ray) of every cluster."""
    inc = instance.rays.incidence
    out = []
    for c in partition.clusters:
        free = [a for a in c.members if a != partition.aux]
        q = inc[:, free] @ state.sigma[free] if free else np.zeros(instance.ray_count, dtype=np.int64)
        if partition.aux in c.members:
            q = q + instance.spin_data * state.aux_sigma
        out.append(q)
    return out


def enumerate_spins(n: int) -> np.ndarray:
    """All 2^n spin configurations as rows; row k encodes the bits of k."""
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int64)


@dataclass(frozen=True)
class BruteForceResult:
    solutions: frozenset[tuple[int, ...]]
    max_cut: int
    maximizers: frozenset[tuple[int, ...]]


def brute_force_solutions(instance: TomographyInstance) -> BruteForceResult:
    """Exhaustive enumeration of every spin configuration.

    Solutions are selected by recomputing each candidate's projections, the
    maximizers by the cut formula, so the two sets come from separate paths.
    """
    n = instance.node_count
    if n > MAX_BRUTE_FORCE_SPINS:
        raise ModelError(f"brute force limited to {MAX_BRUTE_FORCE_SPINS} spins, got {n}")
    spins = enumerate_spins(n)
    inc = instance.rays.incidence
    pixels = (spins > 0).astype(np.int64)
    matches = ((pixels @ inc.T) == instance.projections).all(axis=1)
    q = spins @ inc.T + instance.spin_data
    cuts = max_cut_bound(instance) - (q * q).sum(axis=1) // 4
    best = int(cuts.max())
    return BruteForceResult(
        frozenset(map(tuple, spins[matches].tolist())),
        best,
        frozenset(map(tuple, spins[cuts == best].tolist())),
    )


@dataclass(frozen=True)
class DefectFixture:
    """Two-ray defect on a 2x2 grid.

    Data: rows (1, 1), columns (1, 1).  The spins set the whole top row, so
    row 0 has Q = +2 and row 1 has Q = -2 while both columns are satisfied.
    Every single flip leaves the cut unchanged; flipping ``alpha`` and
    ``beta`` (the right column) together yields the diagonal solution.
    ``state`` puts alpha and beta above every other particle of their rays.
    """

    instance: TomographyInstance
    state: SpinState
    alpha: int
    beta: int


def build_defect_fixture(seed: int = 0) -> DefectFixture:
    rays = build_grid_rays_2d(2, 2)
    instance = make_instance(rays, project(BinaryImage.from_array([[1, 0], [0, 1]]), rays), seed)
    sigma = np.array([1, 1, -1, -1])
    x = np.array([-0.5, 0.6, -0.3, 0.5])
    return DefectFixture(instance, SpinState(sigma, x), alpha=1, beta=3)
