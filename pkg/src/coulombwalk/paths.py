"""Discretized 3D paths under the (optionally drifted) Wiener base measure,
and the measure-preserving moves composed by the MCMC engine.

Increments are the primary representation; positions are their prefix sum
with the origin pinned at zero. Every move below maps the base increment law
to itself, which is what makes the Metropolis ratio a pure energy factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ModelParams, ParameterError, SeedSpec, TimeGrid

E1 = np.array([1.0, 0.0, 0.0])

ROTATION_TOL = 1e-12

__all__ = [
    "PathSample",
    "apply_global_autoregressive",
    "apply_pivot",
    "dump_path_csv",
    "random_rotation",
    "resample_block",
    "sample_path",
    "straight_line_path",
]


@dataclass(frozen=True)
class PathSample:
    """A path on a uniform grid: n increments in R^3 and the n+1 node positions."""

    grid: TimeGrid
    increments: np.ndarray
    positions: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    @classmethod
    def from_increments(cls, grid: TimeGrid, increments: np.ndarray) -> "PathSample":
        increments = np.asarray(increments, dtype=np.float64)
        if increments.shape != (grid.n_steps, 3):
            raise ParameterError(
                f"increments must have shape ({grid.n_steps}, 3), got {increments.shape}"
            )
        if not np.all(np.isfinite(increments)):
            raise ParameterError("increments contain non-finite values")
        positions = np.empty((grid.n_steps + 1, 3))
        positions[0] = 0.0
        np.cumsum(increments, axis=0, out=positions[1:])
        increments.setflags(write=False)
        positions.setflags(write=False)
        return cls(grid=grid, increments=increments, positions=positions)


def sample_path(params: ModelParams, seed: SeedSpec) -> PathSample:
    """Draw a path with i.i.d. Gaussian increments, mean mu*dt*e1, covariance dt*I."""
    grid = params.grid
    rng = seed.generator()
    increments = _base_increments(rng, grid.n_steps, grid.dt, params.drift_mu)
    return PathSample.from_increments(grid, increments)


def _base_increments(rng: np.random.Generator, n: int, dt: float, mu: float) -> np.ndarray:
    xi = rng.standard_normal((n, 3)) * math.sqrt(dt)
    if mu != 0.0:
        xi[:, 0] += mu * dt
    return xi


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform rotation on SO(3) from a uniformly random unit quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def check_rotation(rotation: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate a proper rotation matrix to within tol."""
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ParameterError(f"rotation must be 3x3, got shape {rotation.shape}")
    defect = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
    if defect > tol:
        raise ParameterError(f"matrix is not orthogonal (defect {defect:.3e} > {tol:.0e})")
    det = np.linalg.det(rotation)
    if abs(det - 1.0) > max(tol, 1e-12):
        raise ParameterError(f"rotation must have determinant +1, got {det!r}")
    return rotation


def apply_pivot(path: PathSample, k: int, rotation: np.ndarray) -> PathSample:
    """Rotate increments k+1..n by the given rotation; increments 1..k are kept.

    Nodes 0..k are unchanged; the tail is rotated rigidly about node k. The
    increment law is isotropic, so the base measure is preserved.
    """
    n = path.n_steps
    if not 1 <= k <= n:
        raise ParameterError(f"pivot index must satisfy 1 <= k <= {n}, got {k}")
    rotation = check_rotation(rotation)
    if k == n:
        return path
    new_inc = path.increments.copy()
    new_inc[k:] = new_inc[k:] @ rotation.T
    return PathSample.from_increments(path.grid, new_inc)


def pivoted_tail_positions(path: PathSample, k: int, rotation: np.ndarray) -> np.ndarray:
    """Positions of nodes k+1..n after a pivot at k, without rebuilding the path."""
    anchor = path.positions[k]
    return anchor + (path.positions[k + 1 :] - anchor) @ rotation.T


def apply_global_autoregressive(
    path: PathSample, s: float, noise_seed: SeedSpec, params: ModelParams
) -> PathSample:
    """Autoregressive refresh of all increments, stationary for the base law.

    Centered increments are shrunk by sqrt(1-s^2) and topped up with fresh
    Gaussian noise of the base covariance; s = 1 is a full redraw.
    """
    rng = noise_seed.generator()
    new_inc = _ar_increments(path.increments, s, rng, path.dt, params.drift_mu)
    return PathSample.from_increments(path.grid, new_inc)


def _ar_increments(
    increments: np.ndarray, s: float, rng: np.random.Generator, dt: float, mu: float
) -> np.ndarray:
    if not 0.0 < s <= 1.0:
        raise ParameterError(f"autoregressive step must lie in (0, 1], got {s}")
    n = increments.shape[0]
    noise = rng.standard_normal((n, 3)) * math.sqrt(dt)
    mean = mu * dt * E1
    return math.sqrt(1.0 - s * s) * (increments - mean) + s * noise + mean


def resample_block(
    path: PathSample, i0: int, length: int, seed: SeedSpec, params: ModelParams
) -> PathSample:
    """Redraw increments i0..i0+length-1 (1-based) from the base law.

    Nodes before the block are untouched; nodes after it translate rigidly.
    """
    rng = seed.generator()
    new_inc = _block_increments(path.increments, i0, length, rng, path.dt, params.drift_mu)
    return PathSample.from_increments(path.grid, new_inc)


def _block_increments(
    increments: np.ndarray,
    i0: int,
    length: int,
    rng: np.random.Generator,
    dt: float,
    mu: float,
) -> np.ndarray:
    n = increments.shape[0]
    if length < 1:
        raise ParameterError(f"block length must be >= 1, got {length}")
    if not (1 <= i0 and i0 + length - 1 <= n):
        raise ParameterError(f"block [{i0}, {i0 + length - 1}] out of range 1..{n}")
    new_inc = increments.copy()
    new_inc[i0 - 1 : i0 - 1 + length] = _base_increments(rng, length, dt, mu)
    return new_inc


def straight_line_path(n_steps: int, dt: float = 1.0, direction=E1) -> PathSample:
    """Deterministic straight path with unit-length steps along `direction`."""
    direction = np.asarray(direction, dtype=np.float64)
    inc = np.tile(direction, (n_steps, 1))
    return PathSample.from_increments(TimeGrid(n_steps * dt, n_steps), inc)


def dump_path_csv(path: PathSample, stream) -> None:
    """Write one row per node: i, t, x, y, z."""
    stream.write("i,t,x,y,z\n")
    times = path.grid.nodes()
    for i in range(path.grid.n_nodes):
        x, y, z = (float(v) for v in path.positions[i])
        stream.write(f"{i},{float(times[i])!r},{x!r},{y!r},{z!r}\n")


def load_path_csv(stream, dt: float | None = None) -> PathSample:
    """Read a path written by dump_path_csv. dt overrides the file's spacing."""
    rows = [line.strip() for line in stream if line.strip()]
    if rows and rows[0].lower().startswith("i,"):
        rows = rows[1:]
    data = np.array([[float(v) for v in row.split(",")] for row in rows])
    if data.ndim != 2 or data.shape[1] != 5:
        raise ParameterError("path CSV must have columns i,t,x,y,z")
    n = data.shape[0] - 1
    spacing = dt if dt is not None else float(data[1, 1] - data[0, 1])
    positions = data[:, 2:5]
    increments = np.diff(positions, axis=0)
    path = PathSample.from_increments(TimeGrid(spacing * n, n), increments)
    if np.max(np.abs(positions[0])) != 0.0:
        raise ParameterError("path CSV must start at the origin")
    return path
