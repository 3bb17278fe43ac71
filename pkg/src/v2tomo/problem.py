"""Ray systems, tomographic data and the spin formulation of the problem."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .model import (BinaryImage, ModelError, RaySystem, TomographyInstance,
                    VectorChargeTable)


class InconsistentDataError(ModelError):
    """Tomographic data that no binary image can satisfy."""


@dataclass(frozen=True)
class RayViolation:
    message: str
    pair: tuple[int, int] | None = None
    shared: tuple[int, ...] = ()


def build_grid_rays(dims: Sequence[int]) -> RaySystem:
    """Axis-aligned lines through a 1-3 dimensional grid.

    Families are emitted from the last axis to the first, so a ``(H, W)``
    grid yields its H rows followed by its W columns.
    """
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= 3 or any(d < 1 for d in dims):
        raise ModelError(f"grid dims must be 1-3 positive sizes, got {dims}")
    index = np.arange(math.prod(dims)).reshape(dims)
    rays = []
    for axis in reversed(range(len(dims))):
        lines = np.moveaxis(index, axis, -1).reshape(-1, dims[axis])
        rays.extend(tuple(line) for line in lines.tolist())
    return RaySystem(math.prod(dims), tuple(rays))


def build_grid_rays_2d(width: int, height: int) -> RaySystem:
    if width < 1 or height < 1:
        raise ModelError("grid dimensions must be positive")
    return build_grid_rays((height, width))


def build_grid_rays_3d(nx: int, ny: int, nz: int) -> RaySystem:
    if min(nx, ny, nz) < 1:
        raise ModelError("grid dimensions must be positive")
    return build_grid_rays((nx, ny, nz))


def find_ray_violation(node_count: int, rays: Sequence[Sequence[int]]) -> RayViolation | None:
    """Check raw ray data; return the first problem found or None."""
    for r, ray in enumerate(rays):
        if len(ray) == 0:
            return RayViolation(f"ray {r} is empty", (r, r))
        bad = [a for a in ray if not 0 <= a < node_count]
        if bad:
            return RayViolation(f"ray {r} has node index {bad[0]} out of range", (r, r), (bad[0],))
        if len(set(ray)) != len(ray):
            return RayViolation(f"ray {r} repeats a node", (r, r))

    containing: list[list[int]] = [[] for _ in range(node_count)]
    for r, ray in enumerate(rays):
        for a in ray:
            containing[a].append(r)
    shared: dict[tuple[int, int], list[int]] = {}
    for a, rs in enumerate(containing):
        for pair in combinations(rs, 2):
            shared.setdefault(pair, []).append(a)
    offending = sorted(pair for pair, nodes in shared.items() if len(nodes) > 1)
    if offending:
        pair = offending[0]
        nodes = tuple(sorted(shared[pair]))
        return RayViolation(f"rays {pair[0]} and {pair[1]} share nodes {list(nodes)}", pair, nodes)
    return None


def validate_ray_system(rays: RaySystem) -> RayViolation | None:
    return find_ray_violation(rays.node_count, rays.rays)


def project(image: BinaryImage, rays: RaySystem) -> np.ndarray:
    """Pixel sums P(r) of the image along every ray."""
    if image.size != rays.node_count:
        raise ModelError(f"image has {image.size} pixels, rays cover {rays.node_count} nodes")
    return np.add.reduceat(image.values.astype(np.int64)[rays.nodes], rays.ptr[:-1])


def axis_families(rays: RaySystem) -> list[list[int]]:
    """Runs of consecutive rays that partition the node set.

    For grid ray systems these are exactly the axis families, each of which
    must carry the full image mass.
    """
    families = []
    current: list[int] = []
    covered = np.zeros(rays.node_count, dtype=bool)
    count = 0
    for r, ray in enumerate(rays.rays):
        idx = np.fromiter(ray, dtype=np.int64)
        if covered[idx].any():
            current, count = [], 0
            covered[:] = False
        current.append(r)
        covered[idx] = True
        count += idx.size
        if count == rays.node_count:
            families.append(current)
            current, count = [], 0
            covered[:] = False
    return families


_PRIME_CACHE = np.array([2, 3, 5, 7, 11, 13], dtype=np.int64)


def first_primes(k: int) -> np.ndarray:
    global _PRIME_CACHE
    if k <= _PRIME_CACHE.size:
        return _PRIME_CACHE[:k].copy()
    # p_k < k (ln k + ln ln k) for k >= 6
    limit = int(k * (math.log(k) + math.log(math.log(k)))) + 10
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(limit ** 0.5) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    _PRIME_CACHE = np.flatnonzero(sieve).astype(np.int64)
    return _PRIME_CACHE[:k].copy()


def lambda_from_prime(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.int64)
    return np.sqrt(p) / np.floor(np.sqrt(p))


def lambda_weights(ray_count: int, seed: int) -> np.ndarray:
    """Distinct irrational ray weights sqrt(p)/floor(sqrt(p)) for random primes p."""
    if ray_count < 1:
        raise ModelError("ray_count must be >= 1")
    pool = first_primes(2 * ray_count)
    chosen = np.random.default_rng(seed).permutation(pool)[:ray_count]
    return lambda_from_prime(chosen)


def make_instance(rays: RaySystem, projections, seed: int = 0) -> TomographyInstance:
    proj = np.asarray(projections, dtype=np.int64).reshape(-1)
    if proj.size != len(rays):
        raise ModelError(f"{proj.size} projections given for {len(rays)} rays")
    lengths = rays.lengths
    bad = np.flatnonzero((proj < 0) | (proj > lengths))
    if bad.size:
        r = int(bad[0])
        raise InconsistentDataError(
            f"infeasible projection P={proj[r]} on ray {r} of length {lengths[r]}")
    masses = {int(proj[fam].sum()) for fam in axis_families(rays)}
    if len(masses) > 1:
        raise InconsistentDataError(
            f"axis families disagree on the total mass: {sorted(masses)}")
    return TomographyInstance(rays, proj, lengths - 2 * proj,
                              lambda_weights(len(rays), seed), seed)


def instance_from_image(image: BinaryImage, seed: int = 0,
                        rays: RaySystem | None = None) -> TomographyInstance:
    if rays is None:
        rays = build_grid_rays(image.dims)
    return make_instance(rays, project(image, rays), seed)


def assemble_charges(instance: TomographyInstance, sigma, scaled: bool = True) -> VectorChargeTable:
    sigma = np.asarray(sigma, dtype=np.int64).reshape(-1)
    if sigma.size != instance.node_count:
        raise ModelError(f"{sigma.size} spins given for {instance.node_count} nodes")
    w = instance.sqrt_lambdas if scaled else np.ones(instance.ray_count)
    free = tuple({r: float(sigma[a] * w[r]) for r in rs}
                 for a, rs in enumerate(instance.rays.membership))
    aux = instance.spin_data * w
    return VectorChargeTable(instance, sigma.copy(), scaled, free, aux)


def to_adjacency(instance: TomographyInstance) -> np.ndarray:
    """Weighted adjacency of the clique-union graph with contracted auxiliary spin.

    Free nodes keep their indices; the auxiliary spin is the last node.
    """
    inc = instance.rays.incidence
    n = instance.node_count
    adj = np.zeros((n + 1, n + 1), dtype=np.int64)
    adj[:n, :n] = inc.T @ inc
    np.fill_diagonal(adj, 0)
    adj[:n, n] = adj[n, :n] = inc.T @ instance.spin_data
    return adj


def random_image(dims: Sequence[int], density: float, seed) -> BinaryImage:
    if not 0.0 <= density <= 1.0:
        raise ModelError("density must lie in [0, 1]")
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    return BinaryImage(dims, (rng.random(math.prod(dims)) < density).astype(np.int8))
