"""Domain types shared by the solver, the baselines and the harness.

Free nodes are indexed exactly like pixels (flat, row-major).  The auxiliary
spin is not part of the spin arrays: it sits at ``sigma = +1``, ``x = 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np


class ModelError(ValueError):
    """Raised when a domain object is constructed with inconsistent data."""


@dataclass(frozen=True, eq=False)
class BinaryImage:
    dims: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(dims) <= 3 or any(d < 1 for d in dims):
            raise ModelError(f"dims must hold 1-3 positive sizes, got {self.dims}")
        values = np.asarray(self.values).reshape(-1)
        if values.size != math.prod(dims):
            raise ModelError(
                f"{values.size} values do not fill a grid of dims {dims}")
        if values.size and not np.isin(values, (0, 1)).all():
            raise ModelError("image values must be 0 or 1")
        values = values.astype(np.int8)
        values.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, array) -> "BinaryImage":
        array = np.asarray(array)
        return cls(array.shape, array.reshape(-1))

    def to_array(self) -> np.ndarray:
        return self.values.reshape(self.dims).copy()

    @property
    def size(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.dims, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class RaySystem:
    """Family of node subsets, any two of which share at most one node.

    The pairwise-intersection property is not checked here (it is quadratic in
    the number of rays); see :func:`v2tomo.problem.validate_ray_system`.
    """

    node_count: int
    rays: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise ModelError("node_count must be positive")
        rays = tuple(tuple(int(a) for a in ray) for ray in self.rays)
        for r, ray in enumerate(rays):
            if not ray:
                raise ModelError(f"ray {r} is empty")
            if len(set(ray)) != len(ray):
                raise ModelError(f"ray {r} repeats a node")
            if min(ray) < 0 or max(ray) >= self.node_count:
                raise ModelError(f"ray {r} has a node index out of range")
        object.__setattr__(self, "rays", rays)

    def __len__(self):
        return len(self.rays)

    def __eq__(self, other):
        if not isinstance(other, RaySystem):
            return NotImplemented
        return self.node_count == other.node_count and self.rays == other.rays

    def __hash__(self):
        return hash((self.node_count, self.rays))

    @cached_property
    def lengths(self) -> np.ndarray:
        """N(r) for every ray."""
        return np.array([len(ray) for ray in self.rays], dtype=np.int64)

    @cached_property
    def ptr(self) -> np.ndarray:
        """CSR offsets: members of ray r are ``nodes[ptr[r]:ptr[r + 1]]``."""
        return np.concatenate(([0], np.cumsum(self.lengths))).astype(np.int64)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.fromiter((a for ray in self.rays for a in ray), dtype=np.int64,
                           count=int(self.lengths.sum()))

    @cached_property
    def membership(self) -> tuple[tuple[int, ...], ...]:
        """D(alpha): indices of the rays containing each node."""
        member = [[] for _ in range(self.node_count)]
        for r, ray in enumerate(self.rays):
            for a in ray:
                member[a].append(r)
        return tuple(tuple(m) for m in member)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Dense (R, N) 0/1 ray-node incidence matrix."""
        inc = np.zeros((len(self.rays), self.node_count), dtype=np.int64)
        ray_index = np.repeat(np.arange(len(self.rays)), self.lengths)
        inc[ray_index, self.nodes] = 1
        return inc


@dataclass(frozen=True, eq=False)
class TomographyInstance:
    rays: RaySystem
    projections: np.ndarray
    spin_data: np.ndarray
    lambdas: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        proj = np.asarray(self.projections, dtype=np.int64).reshape(-1)
        spin = np.asarray(self.spin_data, dtype=np.int64).reshape(-1)
        lam = np.asarray(self.lambdas, dtype=np.float64).reshape(-1)
        n_rays = len(self.rays)
        if not (proj.size == spin.size == lam.size == n_rays):
            raise ModelError("projections, spin_data and lambdas need one entry per ray")
        lengths = self.rays.lengths
        if (proj < 0).any() or (proj > lengths).any():
            r = int(np.flatnonzero((proj < 0) | (proj > lengths))[0])
            raise ModelError(f"infeasible projection P={proj[r]} on ray {r} of length {lengths[r]}")
        if not np.array_equal(spin, lengths - 2 * proj):
            raise ModelError("spin_data must equal N(r) - 2 P(r)")
        if (lam <= 1.0).any() or np.unique(lam).size != n_rays:
            raise ModelError("lambdas must be pairwise distinct and > 1")
        for name, arr in (("projections", proj), ("spin_data", spin), ("lambdas", lam)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def node_count(self) -> int:
        return self.rays.node_count

    @property
    def ray_count(self) -> int:
        return len(self.rays)

    @cached_property
    def sqrt_lambdas(self) -> np.ndarray:
        return np.sqrt(self.lambdas)


@dataclass(frozen=True)
class VectorChargeTable:
    """Sparse vector charges of the free spins and of the auxiliary spin.

    ``free_charges[a]`` maps each ray containing node ``a`` to
    ``sigma[a] * sqrt(lambda[r])``; ``aux_charge[r]`` is
    ``spin_data[r] * sqrt(lambda[r])``.  With ``scaled=False`` every lambda is
    taken as 1.
    """

    instance: TomographyInstance
    sigma: np.ndarray
    scaled: bool
    free_charges: tuple[dict[int, float], ...]
    aux_charge: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        """Per-ray factor multiplying unit charges (sqrt(lambda) or 1)."""
        if self.scaled:
            return self.instance.sqrt_lambdas
        return np.ones(self.instance.ray_count)

    def vector(self, node: int | None) -> np.ndarray:
        """Dense R-vector charge of a free node, or of the auxiliary spin for None."""
        if node is None:
            return self.aux_charge.copy()
        vec = np.zeros(self.instance.ray_count)
        for r, c in self.free_charges[node].items():
            vec[r] = c
        return vec


class AgitationMode(enum.Enum):
    FULL_RESAMPLE = "full_resample"


@dataclass(frozen=True)
class MachineConfig:
    stage_time: float = 5.0
    steps_per_stage: int = 600
    max_agitations: int = 10
    seed: int = 0
    agitation_mode: AgitationMode = AgitationMode.FULL_RESAMPLE
    trace_stride: int = 0  # 0 disables the per-step cut trace

    def __post_init__(self):
        if not self.stage_time > 0 or not math.isfinite(self.stage_time):
            raise ModelError("stage_time must be positive and finite")
        if self.steps_per_stage < 1:
            raise ModelError("steps_per_stage must be >= 1")
        if self.max_agitations < 0:
            raise ModelError("max_agitations must be >= 0")
        if self.trace_stride < 0:
            raise ModelError("trace_stride must be >= 0")
        dt = self.stage_time / self.steps_per_stage
        if not (dt > 0 and math.isfinite(dt)):
            raise ModelError("stage_time / steps_per_stage must be positive and finite")

    @property
    def dt(self) -> float:
        return self.stage_time / self.steps_per_stage


@dataclass
class SpinState:
    """Relaxed spins ``xi = sigma + x`` of the free nodes.

    The auxiliary spin sits at ``(aux_sigma, aux_x) = (1, 0)``.  Only
    :func:`v2tomo.analysis.global_shift` produces states where it is moved;
    the dynamics refuse such states.
    """

    sigma: np.ndarray
    x: np.ndarray
    aux_sigma: int = 1
    aux_x: float = 0.0

    def __post_init__(self):
        sigma = np.asarray(self.sigma)
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        if sigma.size and not np.isin(sigma, (-1, 1)).all():
            raise ModelError("sigma values must be exactly +1 or -1")
        sigma = sigma.astype(np.int64).reshape(-1)
        if sigma.shape != x.shape:
            raise ModelError("sigma and x must have equal length")
        if not np.all((x >= -1.0) & (x < 1.0)):
            raise ModelError("x values must lie in [-1, 1)")
        if self.aux_sigma not in (-1, 1) or not -1.0 <= self.aux_x < 1.0:
            raise ModelError("auxiliary spin must have sigma = +-1 and x in [-1, 1)")
        self.sigma = sigma
        self.x = x

    @property
    def aux_pinned(self) -> bool:
        return self.aux_sigma == 1 and self.aux_x == 0.0

    @property
    def size(self) -> int:
        return self.sigma.size

    @property
    def xi(self) -> np.ndarray:
        return self.sigma + self.x

    def copy(self) -> "SpinState":
        return SpinState(self.sigma.copy(), self.x.copy(), self.aux_sigma, self.aux_x)


@dataclass
class RunReport:
    solved: bool
    agitations_used: int
    final_sigma: np.ndarray
    residuals: np.ndarray
    cut_trace: list[tuple[float, float]] = field(default_factory=list)
    stage_cuts: list[float] = field(default_factory=list)
    steps: int = 0
    elapsed: float = 0.0
    flips: int = 0
    error: str | None = None


def image_to_sigma(image: BinaryImage) -> np.ndarray:
    """Spin encoding of an image: set pixels become +1, empty ones -1."""
    return 2 * image.values.astype(np.int64) - 1


def sigma_to_image(sigma: Sequence[int] | np.ndarray, dims: Sequence[int]) -> BinaryImage:
    sigma = np.asarray(sigma).reshape(-1)
    if sigma.size != math.prod(dims):
        raise ModelError(f"{sigma.size} spins do not fill a grid of dims {tuple(dims)}")
    if not np.isin(sigma, (-1, 1)).all():
        raise ModelError("sigma values must be exactly +1 or -1")
    return BinaryImage(tuple(dims), (sigma > 0).astype(np.int8))
