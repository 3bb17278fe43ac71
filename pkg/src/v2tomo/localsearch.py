"""Single-flip (1-opt) local search on the cut, the reference baseline.

Gains are exact integers: flipping node a changes the cut by
``sum_{r containing a} (sigma_a Q_r - 1)``.  Two move rules:

* ``first``: each restart draws a random node order; every move flips the
  earliest node in that order whose gain is positive.
* ``best``: every move flips the node of largest positive gain, ties going to
  the lowest index.

Both stop when no single flip raises the cut.  Restarts are run as a batch;
restart k draws its spins and order from its own seed stream, so results do
not depend on the batch size.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .analysis import cut_value, max_cut_bound, ray_charges
from .model import ModelError, RunReport, TomographyInstance

_BATCH = 1024
RULES = ("first", "best")


def _restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(restart,)))


def restart_sigma(n: int, seed: int, restart: int) -> np.ndarray:
    return _restart_rng(seed, restart).choice(np.array([-1, 1], dtype=np.int64), size=n)


def restart_rank(n: int, seed: int, restart: int) -> np.ndarray:
    """Priority of each node under the ``first`` rule (0 is tried first)."""
    rng = _restart_rng(seed, restart)
    rng.choice(np.array([-1, 1], dtype=np.int64), size=n)  # the spins come first in the stream
    rank = np.empty(n, dtype=np.int64)
    rank[rng.permutation(n)] = np.arange(n)
    return rank


def _gains(sigma, q, inc, degree):
    return sigma * (q @ inc) - degree


def flip_gains(instance: TomographyInstance, sigma) -> np.ndarray:
    """Exact cut change of flipping each node of ``sigma`` (rows for a batch)."""
    sigma = np.asarray(sigma, dtype=np.int64)
    inc = instance.rays.incidence
    q = sigma @ inc.T + instance.spin_data
    return _gains(sigma, q, inc, inc.sum(axis=0))


def _descend(instance: TomographyInstance, sigma: np.ndarray, rank: np.ndarray | None):
    """Descend every row of ``sigma`` in place; ``rank`` None means best-improvement.

    Returns the number of moves made by each row.
    """
    inc = instance.rays.incidence
    degree = inc.sum(axis=0)
    n = sigma.shape[1]
    q = sigma @ inc.T + instance.spin_data
    moves = np.zeros(sigma.shape[0], dtype=np.int64)
    active = np.arange(sigma.shape[0])
    while active.size:
        gain = _gains(sigma[active], q[active], inc, degree)
        if rank is None:
            pick = gain.argmax(axis=1)  # argmax returns the first maximum
            improving = gain[np.arange(active.size), pick] > 0
        else:
            priority = np.where(gain > 0, rank[active], n)
            pick = priority.argmin(axis=1)
            improving = priority[np.arange(active.size), pick] < n
        active, pick = active[improving], pick[improving]
        if not active.size:
            break
        old = sigma[active, pick]
        sigma[active, pick] = -old
        q[active] -= 2 * old[:, None] * inc[:, pick].T
        moves[active] += 1
    return moves


def _check_rule(rule: str):
    if rule not in RULES:
        raise ModelError(f"rule must be one of {RULES}, got {rule!r}")


@dataclass(frozen=True)
class LocalSearchSample:
    restarts: int
    successes: int
    final_cuts: np.ndarray
    moves: np.ndarray

    @property
    def p_succ(self) -> float:
        return self.successes / self.restarts


def sample_local_search(instance: TomographyInstance, restarts: int, seed: int,
                        rule: str = "first") -> LocalSearchSample:
    """Run ``restarts`` independent descents and count exact reconstructions."""
    if restarts < 1:
        raise ModelError("restarts must be >= 1")
    _check_rule(rule)
    n = instance.node_count
    cuts = np.empty(restarts, dtype=np.int64)
    moves = np.empty(restarts, dtype=np.int64)
    successes = 0
    bound = max_cut_bound(instance)
    for lo in range(0, restarts, _BATCH):
        hi = min(lo + _BATCH, restarts)
        sigma = np.stack([restart_sigma(n, seed, k) for k in range(lo, hi)])
        rank = None
        if rule == "first":
            rank = np.stack([restart_rank(n, seed, k) for k in range(lo, hi)])
        moves[lo:hi] = _descend(instance, sigma, rank)
        q = sigma @ instance.rays.incidence.T + instance.spin_data
        cuts[lo:hi] = bound - (q * q).sum(axis=1) // 4
        successes += int((~q.any(axis=1)).sum())
    return LocalSearchSample(restarts, successes, cuts, moves)


def local_search_1opt(instance: TomographyInstance, seed: int, initial_sigma=None,
                      rule: str = "first") -> RunReport:
    """One descent; spins and node order come from restart 0 of ``seed``."""
    _check_rule(rule)
    started = time.perf_counter()
    if initial_sigma is None:
        sigma = restart_sigma(instance.node_count, seed, 0)
    else:
        sigma = np.asarray(initial_sigma, dtype=np.int64).reshape(-1).copy()
        if sigma.size != instance.node_count or not np.isin(sigma, (-1, 1)).all():
            raise ModelError("initial_sigma must hold one +-1 value per node")
    batch = sigma[None, :].copy()
    rank = restart_rank(instance.node_count, seed, 0)[None, :] if rule == "first" else None
    moves = int(_descend(instance, batch, rank)[0])
    sigma = batch[0]
    residuals = ray_charges(instance, sigma)
    return RunReport(solved=not residuals.any(), agitations_used=0, final_sigma=sigma,
                     residuals=residuals, stage_cuts=[cut_value(instance, sigma)],
                     steps=moves, flips=moves, elapsed=time.perf_counter() - started)
