"""Pairwise path functionals: Coulomb energy, gyration radius (two
algebraically equal forms), the exact discrete Hoelder invariant, the Gibbs
log-weight, and the incremental energy delta used by pivot moves.

The Coulomb energy discretizes the double time integral of 1/|B_t - B_s| as
dt^2 times the ordered off-diagonal node-pair sum (each unordered pair twice,
i = j omitted). Near-coincident nodes are clamped at EPS_MIN and counted; a
path with more than CLAMP_FRACTION_LIMIT of its pairs clamped is rejected as
degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .core import DegeneratePathError, ParameterError
from .paths import PathSample, check_rotation, pivoted_tail_positions

EPS_MIN = 1e-12
CLAMP_FRACTION_LIMIT = 1e-3

__all__ = [
    "CLAMP_FRACTION_LIMIT",
    "EPS_MIN",
    "FunctionalSeries",
    "HolderCheck",
    "PathFunctionals",
    "coulomb_energy",
    "coulomb_energy_diagnostics",
    "coulomb_delta_pivot",
    "holder_check",
    "log_gibbs_weight",
    "path_functionals",
    "radius_gyration_centered",
    "radius_gyration_pairwise",
]


@dataclass(frozen=True)
class PathFunctionals:
    """The three per-path observables, plus the clamp diagnostic."""

    coulomb: float
    rg: float
    endpoint_x1: float
    clamped_pairs: int = 0


@dataclass(frozen=True)
class FunctionalSeries:
    """Columnar PathFunctionals for a collection of paths or chain sweeps."""

    coulomb: np.ndarray
    rg: np.ndarray
    endpoint_x1: np.ndarray
    clamped_pairs: int = 0

    def __len__(self) -> int:
        return len(self.coulomb)

    def __getitem__(self, i: int) -> PathFunctionals:
        return PathFunctionals(
            float(self.coulomb[i]), float(self.rg[i]), float(self.endpoint_x1[i])
        )

    @classmethod
    def from_samples(cls, samples) -> "FunctionalSeries":
        if isinstance(samples, cls):
            return samples
        samples = list(samples)
        return cls(
            coulomb=np.array([s.coulomb for s in samples]),
            rg=np.array([s.rg for s in samples]),
            endpoint_x1=np.array([s.endpoint_x1 for s in samples]),
            clamped_pairs=sum(s.clamped_pairs for s in samples),
        )


def _check_clamps(clamps: int, n_nodes: int) -> None:
    n_pairs = n_nodes * (n_nodes - 1) // 2
    if clamps > CLAMP_FRACTION_LIMIT * n_pairs:
        raise DegeneratePathError(
            f"{clamps} of {n_pairs} node pairs below {EPS_MIN:g} separation"
        )


def coulomb_energy_diagnostics(path: PathSample, workers: int | None = None) -> tuple[float, int]:
    """Coulomb energy together with the clamped-pair count."""
    with _kernels.workers(workers):
        inv_sum, clamps = _kernels.inv_distance_sum(path.positions, EPS_MIN)
    _check_clamps(clamps, path.grid.n_nodes)
    return 2.0 * path.dt * path.dt * inv_sum, clamps


def coulomb_energy(path: PathSample, workers: int | None = None) -> float:
    """dt^2 times the ordered off-diagonal sum of inverse node distances."""
    return coulomb_energy_diagnostics(path, workers)[0]


def coulomb_delta_pivot(
    path: PathSample, k: int, rotation: np.ndarray, workers: int | None = None
) -> float:
    """Energy change of a pivot at k, touching only head-tail pairs.

    Pairs inside the head and inside the rotated tail keep their distances,
    so only the (k+1)(n-k) straddling pairs contribute.
    """
    n = path.n_steps
    if not 1 <= k <= n:
        raise ParameterError(f"pivot index must satisfy 1 <= k <= {n}, got {k}")
    rotation = check_rotation(rotation)
    if k == n or np.array_equal(rotation, np.eye(3)):
        return 0.0
    head = path.positions[: k + 1]
    old_tail = path.positions[k + 1 :]
    new_tail = pivoted_tail_positions(path, k, rotation)
    with _kernels.workers(workers):
        old_sum, new_sum, _ = _kernels.straddle_inv_sums(head, old_tail, new_tail, EPS_MIN)
    return 2.0 * path.dt * path.dt * (new_sum - old_sum)


def radius_gyration_pairwise(path: PathSample, workers: int | None = None) -> float:
    """Root mean square pair distance over all (n+1)^2 node pairs, O(n^2) form."""
    with _kernels.workers(workers):
        sq_sum = _kernels.sq_distance_sum(path.positions)
    n_nodes = path.grid.n_nodes
    return math.sqrt(2.0 * sq_sum / (n_nodes * n_nodes))


def radius_gyration_centered(path: PathSample) -> float:
    """O(n) form: sqrt(2 * mean squared deviation from the node centroid)."""
    return _rg_centered(path.positions)


def _rg_centered(positions: np.ndarray) -> float:
    centered = positions - positions.mean(axis=0)
    return math.sqrt(2.0 * np.mean(np.einsum("ij,ij->i", centered, centered)))


class HolderCheck(NamedTuple):
    """Off-diagonal pair moments and their scale-invariant product (>= 1)."""

    m2: float
    m_neg1: float
    product: float


def holder_check(path: PathSample, workers: int | None = None) -> HolderCheck:
    """Exact discrete form of the interpolation inequality between the mean
    squared and mean inverse pair distances: sqrt(m2) * m_neg1 >= 1."""
    with _kernels.workers(workers):
        sq_sum, inv_sum, clamps = _kernels.pair_moment_sums(path.positions, EPS_MIN)
    _check_clamps(clamps, path.grid.n_nodes)
    n_nodes = path.grid.n_nodes
    n_ordered = n_nodes * (n_nodes - 1)
    m2 = 2.0 * sq_sum / n_ordered
    m_neg1 = 2.0 * inv_sum / n_ordered
    return HolderCheck(m2, m_neg1, math.sqrt(m2) * m_neg1)


def log_gibbs_weight(path: PathSample, beta: float, workers: int | None = None) -> float:
    """-beta times the Coulomb energy; the Gibbs weight itself is exp of this
    and is never materialized (it underflows at large T)."""
    if beta < 0.0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    return -beta * coulomb_energy(path, workers)


def path_functionals(path: PathSample, workers: int | None = None) -> PathFunctionals:
    """All per-path observables in one pass."""
    coulomb, clamps = coulomb_energy_diagnostics(path, workers)
    return PathFunctionals(
        coulomb=coulomb,
        rg=_rg_centered(path.positions),
        endpoint_x1=float(path.positions[-1, 0]),
        clamped_pairs=clamps,
    )


def batch_functionals(positions: np.ndarray, dt: float, workers: int | None = None) -> FunctionalSeries:
    """FunctionalSeries for a (m, n_nodes, 3) batch of node positions.

    The per-path Coulomb values agree bit-for-bit with coulomb_energy on the
    corresponding single paths.
    """
    if positions.ndim != 3 or positions.shape[2] != 3:
        raise ParameterError(f"positions batch must be (m, n_nodes, 3), got {positions.shape}")
    with _kernels.workers(workers):
        inv_sums, clamps = _kernels.batch_inv_distance_sum(positions, EPS_MIN)
    n_nodes = positions.shape[1]
    n_pairs = n_nodes * (n_nodes - 1) // 2
    worst = int(clamps.max()) if len(clamps) else 0
    if worst > CLAMP_FRACTION_LIMIT * n_pairs:
        raise DegeneratePathError(
            f"a path has {worst} of {n_pairs} node pairs below {EPS_MIN:g} separation"
        )
    centered = positions - positions.mean(axis=1, keepdims=True)
    rg = np.sqrt(2.0 * np.mean(np.einsum("pij,pij->pi", centered, centered), axis=1))
    return FunctionalSeries(
        coulomb=2.0 * dt * dt * inv_sums,
        rg=rg,
        endpoint_x1=positions[:, -1, 0].copy(),
        clamped_pairs=int(clamps.sum()),
    )
