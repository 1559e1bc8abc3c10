"""Shared parameter types, time grid, seeding contract, and event predicates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

C1_DEFAULT = 1.0 / 3.0

__all__ = [
    "C1_DEFAULT",
    "ConsistencyError",
    "DegeneratePathError",
    "DomainError",
    "Estimate",
    "EventPredicate",
    "ModelParams",
    "ParameterError",
    "SeedSpec",
    "TimeGrid",
    "default_c2",
    "event_thresholds",
    "make_grid",
]


class ParameterError(ValueError):
    """Invalid argument or configuration value."""


class DomainError(ValueError):
    """Input outside the mathematical validity domain of a formula."""


class DegeneratePathError(RuntimeError):
    """Too many node pairs at (near-)zero separation for the energy to be meaningful."""


class ConsistencyError(RuntimeError):
    """Internal cross-check failed (e.g. incremental energy drifted from recomputation)."""


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: repulsion strength, time horizon, grid count, drift.

    drift_mu = 0 is the undrifted base measure; drift_mu = 1 is the unit tilt
    along the first coordinate used by the importance-sampling estimator.
    """

    beta: float
    horizon_T: float
    n_steps: int
    drift_mu: float = 0.0

    def __post_init__(self):
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ParameterError(f"beta must be finite and >= 0, got {self.beta}")
        if not (self.horizon_T > 0.0 and math.isfinite(self.horizon_T)):
            raise ParameterError(f"horizon_T must be finite and > 0, got {self.horizon_T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ParameterError(f"n_steps must be an integer >= 2, got {self.n_steps}")
        if not math.isfinite(self.drift_mu):
            raise ParameterError(f"drift_mu must be finite, got {self.drift_mu}")
        if not (self.horizon_T / self.n_steps > 0.0):
            raise ParameterError("grid spacing underflowed to zero")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    @property
    def grid(self) -> "TimeGrid":
        return TimeGrid(self.horizon_T, self.n_steps)

    def with_beta(self, beta: float) -> "ModelParams":
        return replace(self, beta=beta)

    def with_drift(self, drift_mu: float) -> "ModelParams":
        return replace(self, drift_mu=drift_mu)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_n = T with spacing T/n.

    A single step (two nodes) is representable so degenerate hand-check paths
    exist; simulation entry points (make_grid, ModelParams) require n >= 2.
    """

    horizon_T: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon_T > 0.0 and math.isfinite(self.horizon_T)):
            raise ParameterError(f"horizon_T must be finite and > 0, got {self.horizon_T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def nodes(self) -> np.ndarray:
        # i * dt rather than linspace so node times are exact multiples of dt;
        # the final node is pinned to the horizon exactly
        t = np.arange(self.n_nodes) * self.dt
        t[-1] = self.horizon_T
        return t


def make_grid(horizon_T: float, n_steps: int) -> TimeGrid:
    """Build the uniform grid on [0, T] with n_steps >= 2 intervals."""
    if int(n_steps) != n_steps or n_steps < 2:
        raise ParameterError(f"make_grid needs n_steps >= 2, got {n_steps}")
    return TimeGrid(horizon_T, n_steps)


@dataclass(frozen=True)
class SeedSpec:
    """Keyed stream of a counter-based generator.

    The (master_seed, stream_index) pair fully determines the stream; distinct
    stream indices give statistically independent streams, so parallel chains
    and replicates are reproducible regardless of scheduling.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if int(self.master_seed) != self.master_seed:
            raise ParameterError("master_seed must be an integer")
        if int(self.stream_index) != self.stream_index or self.stream_index < 0:
            raise ParameterError("stream_index must be a non-negative integer")

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.master_seed % (1 << 64), self.stream_index % (1 << 64)],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, index: int) -> "SeedSpec":
        """Sibling stream with the same master seed."""
        return SeedSpec(self.master_seed, index)


RADIUS_BELOW = "radius_below"
RADIUS_ABOVE = "radius_above"


@dataclass(frozen=True)
class EventPredicate:
    """Threshold event on the gyration radius: {R < thr} or {R > thr}.

    A zero threshold is allowed for radius_above (the almost-sure event).
    """

    kind: str
    threshold: float

    def __post_init__(self):
        if self.kind not in (RADIUS_BELOW, RADIUS_ABOVE):
            raise ParameterError(f"unknown event kind {self.kind!r}")
        if not (self.threshold >= 0.0 and math.isfinite(self.threshold)):
            raise ParameterError(f"threshold must be finite and >= 0, got {self.threshold}")
        if self.kind == RADIUS_BELOW and self.threshold == 0.0:
            raise ParameterError("radius_below with zero threshold is the null event")

    def __call__(self, radius):
        if self.kind == RADIUS_BELOW:
            return radius < self.threshold
        return radius > self.threshold


def default_c2(beta: float) -> float:
    """Default upper-window constant 7*sqrt(beta)."""
    if beta <= 0.0:
        raise DomainError(f"default c2 needs beta > 0, got {beta}")
    return 7.0 * math.sqrt(beta)


def event_thresholds(params, c1: float, c2: float) -> tuple[float, float]:
    """Radius thresholds (c1*T/ln T, c2*T*sqrt(ln T)); natural log, needs T > 1."""
    T = params.horizon_T if hasattr(params, "horizon_T") else float(params)
    if c1 <= 0.0 or c2 <= 0.0:
        raise ParameterError(f"c1 and c2 must be positive, got {c1}, {c2}")
    if T <= 1.0:
        raise DomainError(f"thresholds need T > 1 (ln T > 0), got T = {T}")
    log_t = math.log(T)
    return c1 * T / log_t, c2 * T * math.sqrt(log_t)


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its standard error and effective sample count.

    value is log Z rather than Z when log_domain is set.
    """

    value: float
    std_error: float
    n_effective: float
    method: str
    log_domain: bool = False
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not math.isfinite(self.std_error) or self.std_error < 0.0:
            raise ParameterError(f"std_error must be finite and >= 0, got {self.std_error}")

    @property
    def unreliable(self) -> bool:
        return "unreliable" in self.flags
