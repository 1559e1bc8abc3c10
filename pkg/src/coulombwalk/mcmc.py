"""Metropolis sampler for the Coulomb-penalized path measure.

Every proposal (pivot, global autoregressive refresh, block redraw) preserves
the Wiener base law, so the acceptance probability is min(1, exp(-beta *
energy_delta)) with no proposal-density corrections. Pivot deltas are
computed incrementally from the straddling pairs only; the tracked energy is
audited against a full recomputation every AUDIT_INTERVAL accepted moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .core import (
    ConsistencyError,
    Estimate,
    EventPredicate,
    ModelParams,
    ParameterError,
    SeedSpec,
)
from .functionals import (
    CLAMP_FRACTION_LIMIT,
    EPS_MIN,
    FunctionalSeries,
    _rg_centered,
)
from .paths import (
    PathSample,
    _ar_increments,
    _block_increments,
    pivoted_tail_positions,
    random_rotation,
)

AUDIT_INTERVAL = 1000
AUDIT_RTOL = 1e-6

PIVOT, GLOBAL_AR, BLOCK = "pivot", "global_ar", "block"
MOVE_NAMES = (PIVOT, GLOBAL_AR, BLOCK)

__all__ = [
    "ChainOutput",
    "ChainStats",
    "EssResult",
    "McmcConfig",
    "effective_sample_size",
    "reweighted_event_prob",
    "run_chain",
]


@dataclass(frozen=True)
class McmcConfig:
    """Move mixture, step sizes, and schedule for one chain.

    moves_per_sweep batches several proposals between retained samples; the
    retained count is floor((n_sweeps - burn_in) / thinning) regardless.
    Step-size adaptation (ar_step_s toward 30% acceptance) runs during
    burn-in only, so the retained chain is a fixed Markov kernel.
    """

    n_sweeps: int
    seed: SeedSpec
    burn_in: int = 0
    thinning: int = 1
    move_weights: tuple[float, float, float] = (0.4, 0.4, 0.2)
    ar_step_s: float = 0.3
    block_len: int = 8
    adapt: bool = True
    moves_per_sweep: int = 1

    def __post_init__(self):
        if self.n_sweeps < 1:
            raise ParameterError("n_sweeps must be >= 1")
        if not 0 <= self.burn_in < self.n_sweeps:
            raise ParameterError("need 0 <= burn_in < n_sweeps")
        if self.thinning < 1:
            raise ParameterError("thinning must be >= 1")
        w = np.asarray(self.move_weights, dtype=float)
        if len(w) != 3 or np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("move_weights must be 3 nonnegative values summing to 1")
        if not 0.0 < self.ar_step_s <= 1.0:
            raise ParameterError("ar_step_s must lie in (0, 1]")
        if self.block_len < 1:
            raise ParameterError("block_len must be >= 1")
        if self.moves_per_sweep < 1:
            raise ParameterError("moves_per_sweep must be >= 1")

    @property
    def n_retained(self) -> int:
        return (self.n_sweeps - self.burn_in) // self.thinning


class EssResult(NamedTuple):
    """Integrated autocorrelation time and the effective sample count."""

    iact: float
    ess: float
    degenerate: bool = False


@dataclass(frozen=True)
class ChainStats:
    """Acceptance rates, mixing diagnostics, and clamp events for one run."""

    acceptance: dict[str, float]
    proposals: dict[str, int]
    iact: float
    ess: float
    clamp_events: int
    series_degenerate: bool
    final_ar_step_s: float


@dataclass(frozen=True)
class ChainOutput:
    """Retained functionals plus diagnostics and the final path for restarts."""

    functionals: FunctionalSeries
    stats: ChainStats
    final_path: PathSample
    params: ModelParams
    config: McmcConfig
    kept_paths: tuple = field(default_factory=tuple)


def _full_energy(positions: np.ndarray, dt: float, n_nodes: int) -> tuple[float, int]:
    inv_sum, clamps = _kernels.inv_distance_sum(positions, EPS_MIN)
    n_pairs = n_nodes * (n_nodes - 1) // 2
    if clamps > CLAMP_FRACTION_LIMIT * n_pairs:
        from .core import DegeneratePathError

        raise DegeneratePathError(
            f"{clamps} of {n_pairs} node pairs below {EPS_MIN:g} separation"
        )
    return 2.0 * dt * dt * inv_sum, clamps


def run_chain(
    params: ModelParams,
    cfg: McmcConfig,
    workers: int | None = None,
    trace=None,
    keep_paths_every: int = 0,
) -> ChainOutput:
    """Run one Metropolis chain targeting the penalized path measure.

    The target is built over the undrifted base measure, so params.drift_mu
    must be zero. The trajectory is a pure function of (params, cfg.seed) and
    is bit-identical for any worker count.
    """
    if params.drift_mu != 0.0:
        raise ParameterError("the penalized target is built over the undrifted base measure")
    beta = params.beta
    grid = params.grid
    n = grid.n_steps
    dt = grid.dt
    n_nodes = grid.n_nodes
    rng = cfg.seed.generator()

    with _kernels.workers(workers):
        path = PathSample.from_increments(
            grid, rng.standard_normal((n, 3)) * math.sqrt(dt)
        )
        clamp_events = 0
        cur_energy = math.nan
        energy_valid = False
        if beta != 0.0:
            cur_energy, clamps = _full_energy(path.positions, dt, n_nodes)
            clamp_events += clamps
            energy_valid = True

        w_pivot, w_ar = cfg.move_weights[0], cfg.move_weights[1]
        ar_s = cfg.ar_step_s
        proposals = dict.fromkeys(MOVE_NAMES, 0)
        accepts = dict.fromkeys(MOVE_NAMES, 0)
        ar_window_prop = 0
        ar_window_acc = 0
        accepted_since_audit = 0

        n_ret = cfg.n_retained
        out_coulomb = np.empty(n_ret)
        out_rg = np.empty(n_ret)
        out_x1 = np.empty(n_ret)
        kept = []
        ret_idx = 0

        if trace is not None:
            trace.write("sweep,coulomb,rg,endpoint_x1,move,accepted\n")

        for sweep in range(1, cfg.n_sweeps + 1):
            move = ""
            accepted = False
            for _ in range(cfg.moves_per_sweep):
                u_move = rng.random()
                if u_move < w_pivot:
                    move = PIVOT
                    k = int(rng.integers(1, n))
                    rotation = random_rotation(rng)
                    u_acc = rng.random()
                    if beta == 0.0:
                        accepted = True
                    else:
                        head = path.positions[: k + 1]
                        new_tail = pivoted_tail_positions(path, k, rotation)
                        old_sum, new_sum, clamps = _kernels.straddle_inv_sums(
                            head, path.positions[k + 1 :], new_tail, EPS_MIN
                        )
                        delta = 2.0 * dt * dt * (new_sum - old_sum)
                        clamp_events += clamps
                        accepted = delta <= 0.0 or math.log(u_acc) < -beta * delta
                        if accepted:
                            cur_energy += delta
                    if accepted:
                        new_inc = path.increments.copy()
                        new_inc[k:] = new_inc[k:] @ rotation.T
                        path = PathSample.from_increments(grid, new_inc)
                        if beta == 0.0:
                            energy_valid = False
                else:
                    if u_move < w_pivot + w_ar:
                        move = GLOBAL_AR
                        new_inc = _ar_increments(path.increments, ar_s, rng, dt, 0.0)
                        ar_window_prop += 1
                    else:
                        move = BLOCK
                        length = min(cfg.block_len, n)
                        i0 = int(rng.integers(1, n - length + 2))
                        new_inc = _block_increments(path.increments, i0, length, rng, dt, 0.0)
                    u_acc = rng.random()
                    new_path = PathSample.from_increments(grid, new_inc)
                    if beta == 0.0:
                        accepted = True
                        energy_valid = False
                    else:
                        new_energy, clamps = _full_energy(new_path.positions, dt, n_nodes)
                        clamp_events += clamps
                        delta = new_energy - cur_energy
                        accepted = delta <= 0.0 or math.log(u_acc) < -beta * delta
                        if accepted:
                            cur_energy = new_energy
                    if accepted:
                        path = new_path
                        if move == GLOBAL_AR:
                            ar_window_acc += 1

                proposals[move] += 1
                if accepted:
                    accepts[move] += 1
                    accepted_since_audit += 1

                if beta != 0.0 and accepted_since_audit >= AUDIT_INTERVAL:
                    recomputed, clamps = _full_energy(path.positions, dt, n_nodes)
                    if abs(cur_energy - recomputed) > AUDIT_RTOL * max(1.0, abs(recomputed)):
                        raise ConsistencyError(
                            f"tracked energy {cur_energy!r} drifted from "
                            f"recomputed {recomputed!r} at sweep {sweep}"
                        )
                    cur_energy = recomputed
                    accepted_since_audit = 0

            # adapt the refresh step toward ~30% acceptance, burn-in only
            if cfg.adapt and sweep <= cfg.burn_in and ar_window_prop >= 50:
                rate = ar_window_acc / ar_window_prop
                ar_s = min(1.0, max(1e-9, ar_s * math.exp(0.6 * (rate - 0.3))))
                ar_window_prop = 0
                ar_window_acc = 0

            retain = sweep > cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0
            if (retain or trace is not None) and not energy_valid:
                cur_energy, clamps = _full_energy(path.positions, dt, n_nodes)
                clamp_events += clamps
                energy_valid = True
            if retain:
                out_coulomb[ret_idx] = cur_energy
                out_rg[ret_idx] = _rg_centered(path.positions)
                out_x1[ret_idx] = path.positions[-1, 0]
                if keep_paths_every and ret_idx % keep_paths_every == 0:
                    kept.append(path)
                ret_idx += 1
            if trace is not None:
                trace.write(
                    f"{sweep},{float(cur_energy)!r},{_rg_centered(path.positions)!r},"
                    f"{float(path.positions[-1, 0])!r},{move},{int(accepted)}\n"
                )

    assert ret_idx == n_ret
    if n_ret >= 100:
        ess_res = effective_sample_size(out_rg)
    else:
        ess_res = EssResult(iact=0.5, ess=float(n_ret), degenerate=n_ret == 0)
    rates = {
        m: (accepts[m] / proposals[m] if proposals[m] else math.nan) for m in MOVE_NAMES
    }
    stats = ChainStats(
        acceptance=rates,
        proposals=dict(proposals),
        iact=ess_res.iact * cfg.thinning,
        ess=ess_res.ess,
        clamp_events=clamp_events,
        series_degenerate=ess_res.degenerate,
        final_ar_step_s=ar_s,
    )
    series = FunctionalSeries(
        coulomb=out_coulomb, rg=out_rg, endpoint_x1=out_x1, clamped_pairs=clamp_events
    )
    return ChainOutput(
        functionals=series,
        stats=stats,
        final_path=path,
        params=params,
        config=cfg,
        kept_paths=tuple(kept),
    )


def effective_sample_size(series: Sequence[float]) -> EssResult:
    """Mixing diagnostics by the initial-positive-sequence truncation rule.

    iact is normalized so an i.i.d. series has iact = 0.5 and
    ess = len / (2 * iact) equals the series length.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError("series must be one-dimensional")
    n = len(x)
    if n < 100:
        raise ParameterError(f"need at least 100 points, got {n}")
    centered = x - x.mean()
    variance = float(np.mean(centered * centered))
    if variance == 0.0 or not math.isfinite(variance):
        return EssResult(iact=n / 2.0, ess=n / (2.0 * (n / 2.0)), degenerate=True)
    # autocovariance by FFT, biased normalization (divide by n)
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n
    rho = acov / acov[0]
    gamma_sum = 0.0
    for m in range(0, (n - 1) // 2):
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0.0:
            break
        gamma_sum += gamma
    iact = max(0.5, gamma_sum - 0.5)
    return EssResult(iact=iact, ess=n / (2.0 * iact), degenerate=False)


def reweighted_event_prob(prior_samples, beta: float, predicate: EventPredicate) -> Estimate:
    """Self-normalized importance estimate of the penalized event probability
    from base-measure samples, with a delta-method standard error.

    Flags the estimate "unreliable" when the normalized weight ESS drops
    below 1% of the sample count (it is still returned).
    """
    if beta < 0.0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    fs = FunctionalSeries.from_samples(prior_samples)
    m = len(fs)
    if m == 0:
        raise ParameterError("no prior samples given")
    logw = -beta * fs.coulomb
    w = np.exp(logw - logw.max())
    w_sum = float(w.sum())
    indicator = predicate(fs.rg).astype(np.float64)
    # same reduction for numerator and denominator, so a sure event is 1.0 exactly
    prob = float((w * indicator).sum() / w_sum)
    # delta method for the self-normalized ratio
    se = float(np.sqrt(np.sum((w * (indicator - prob)) ** 2)) / w_sum)
    weight_ess = w_sum * w_sum / float(np.dot(w, w))
    flags = ("unreliable",) if weight_ess < 0.01 * m else ()
    return Estimate(
        value=prob,
        std_error=se,
        n_effective=weight_ess,
        method="reweighted",
        flags=flags,
    )
