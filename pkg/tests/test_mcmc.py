import io
import math

import numpy as np
import pytest

from coulombwalk import (
    EventPredicate,
    McmcConfig,
    ModelParams,
    ParameterError,
    SeedSpec,
    coulomb_energy,
    effective_sample_size,
    reweighted_event_prob,
    run_chain,
    sample_functionals,
)
from coulombwalk.core import RADIUS_ABOVE, RADIUS_BELOW
from coulombwalk.mcmc import EssResult


class TestEffectiveSampleSize:
    def test_iid_series(self, rng):
        res = effective_sample_size(rng.standard_normal(10_000))
        assert 0.4 <= res.iact <= 0.7
        assert not res.degenerate
        assert res.ess <= 10_000

    def test_ar1_series(self, rng):
        # AR(1) with coefficient 0.9: iact = 1/2 + sum rho^k = 9.5
        phi, n = 0.9, 100_000
        noise = rng.standard_normal(n)
        x = np.empty(n)
        x[0] = noise[0] / math.sqrt(1 - phi * phi)
        for i in range(1, n):
            x[i] = phi * x[i - 1] + noise[i]
        res = effective_sample_size(x)
        assert abs(res.iact - 9.5) / 9.5 < 0.2
        assert res.ess == pytest.approx(n / (2 * res.iact))

    def test_constant_series(self):
        res = effective_sample_size(np.full(500, 3.14))
        assert res.degenerate
        assert res.iact == 250.0

    def test_too_short(self):
        with pytest.raises(ParameterError):
            effective_sample_size(np.arange(50.0))


class TestConfigValidation:
    def test_weights(self):
        with pytest.raises(ParameterError):
            McmcConfig(n_sweeps=10, seed=SeedSpec(1), move_weights=(0.5, 0.5, 0.5))
        with pytest.raises(ParameterError):
            McmcConfig(n_sweeps=10, seed=SeedSpec(1), burn_in=10)
        with pytest.raises(ParameterError):
            McmcConfig(n_sweeps=10, seed=SeedSpec(1), ar_step_s=0.0)

    def test_retained_count(self):
        cfg = McmcConfig(n_sweeps=107, seed=SeedSpec(1), burn_in=10, thinning=3)
        assert cfg.n_retained == (107 - 10) // 3


class TestChainAtZeroBeta:
    def test_everything_accepted_and_prior_moments(self):
        T, n = 1.0, 128
        params = ModelParams(beta=0.0, horizon_T=T, n_steps=n)
        cfg = McmcConfig(n_sweeps=10_000, burn_in=500, seed=SeedSpec(101))
        out = run_chain(params, cfg)
        for move, rate in out.stats.acceptance.items():
            assert rate == 1.0, move
        rg2 = out.functionals.rg ** 2
        ess = effective_sample_size(rg2).ess
        se = rg2.std(ddof=1) / math.sqrt(ess)
        exact = T * (n + 2) / (n + 1)  # discrete E rg^2
        assert abs(rg2.mean() - exact) < 3 * se

    def test_matches_direct_prior_sampling(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=64)
        out = run_chain(params, McmcConfig(n_sweeps=8000, burn_in=500, seed=SeedSpec(102)))
        prior = sample_functionals(params, 4000, SeedSpec(103))
        rg = out.functionals.rg
        se_chain = rg.std(ddof=1) / math.sqrt(max(out.stats.ess, 1.0))
        se_prior = prior.rg.std(ddof=1) / math.sqrt(len(prior.rg))
        z = (rg.mean() - prior.rg.mean()) / math.hypot(se_chain, se_prior)
        assert abs(z) < 3
        c = out.functionals.coulomb
        ess_c = effective_sample_size(c).ess
        se_c = c.std(ddof=1) / math.sqrt(ess_c)
        se_cp = prior.coulomb.std(ddof=1) / math.sqrt(len(prior.coulomb))
        z_c = (c.mean() - prior.coulomb.mean()) / math.hypot(se_c, se_cp)
        assert abs(z_c) < 3


class TestPenalizedChain:
    def test_penalization_lowers_energy(self):
        # beta = 0.5, T = 2: chain mean energy below prior mean energy
        params = ModelParams(beta=0.5, horizon_T=2.0, n_steps=64)
        out = run_chain(params, McmcConfig(n_sweeps=6000, burn_in=1000, seed=SeedSpec(104)))
        prior = sample_functionals(params.with_beta(0.0), 4000, SeedSpec(105))
        c = out.functionals.coulomb
        se_chain = c.std(ddof=1) / math.sqrt(effective_sample_size(c).ess)
        se_prior = prior.coulomb.std(ddof=1) / math.sqrt(len(prior.coulomb))
        gap = prior.coulomb.mean() - c.mean()
        assert gap > 3 * math.hypot(se_chain, se_prior)

    def test_acceptance_rates_in_unit_interval(self):
        params = ModelParams(beta=0.5, horizon_T=1.0, n_steps=32)
        out = run_chain(params, McmcConfig(n_sweeps=2000, burn_in=200, seed=SeedSpec(106)))
        for rate in out.stats.acceptance.values():
            assert 0.0 < rate <= 1.0

    def test_worker_count_invariance(self):
        params = ModelParams(beta=0.4, horizon_T=1.0, n_steps=96)
        cfg = McmcConfig(n_sweeps=600, burn_in=100, seed=SeedSpec(107))
        base = run_chain(params, cfg, workers=1)
        for w in (2, 4, 8):
            other = run_chain(params, cfg, workers=w)
            assert np.array_equal(base.functionals.coulomb, other.functionals.coulomb)
            assert np.array_equal(base.functionals.rg, other.functionals.rg)
            assert np.array_equal(base.final_path.positions, other.final_path.positions)

    def test_deterministic_given_seed(self):
        params = ModelParams(beta=0.3, horizon_T=1.0, n_steps=48)
        cfg = McmcConfig(n_sweeps=500, burn_in=100, seed=SeedSpec(108))
        a = run_chain(params, cfg)
        b = run_chain(params, cfg)
        assert np.array_equal(a.functionals.coulomb, b.functionals.coulomb)
        assert a.stats.acceptance == b.stats.acceptance

    def test_incremental_energy_stays_consistent(self):
        # pivot-heavy run so the tracked energy is dominated by deltas; the
        # in-chain audit (every 1000 accepted moves at 1e-6) must never trip,
        # and the final tracked value must match a recomputation
        params = ModelParams(beta=0.3, horizon_T=1.0, n_steps=64)
        cfg = McmcConfig(
            n_sweeps=12_000,
            burn_in=0,
            seed=SeedSpec(109),
            move_weights=(0.9, 0.05, 0.05),
        )
        out = run_chain(params, cfg)
        tracked = out.functionals.coulomb[-1]
        recomputed = coulomb_energy(out.final_path)
        assert abs(tracked - recomputed) <= 1e-6 * max(1.0, abs(recomputed))

    def test_requires_zero_drift(self):
        params = ModelParams(beta=0.5, horizon_T=1.0, n_steps=16, drift_mu=1.0)
        with pytest.raises(ParameterError):
            run_chain(params, McmcConfig(n_sweeps=10, seed=SeedSpec(1)))

    def test_trace_output(self):
        params = ModelParams(beta=0.2, horizon_T=1.0, n_steps=16)
        buf = io.StringIO()
        out = run_chain(
            params, McmcConfig(n_sweeps=50, burn_in=10, seed=SeedSpec(110)), trace=buf
        )
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "sweep,coulomb,rg,endpoint_x1,move,accepted"
        assert len(lines) == 51
        first = lines[1].split(",")
        assert first[0] == "1"
        assert first[4] in ("pivot", "global_ar", "block")
        assert out.config.n_sweeps == 50

    def test_kept_paths(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=16)
        out = run_chain(
            params,
            McmcConfig(n_sweeps=40, burn_in=0, seed=SeedSpec(111)),
            keep_paths_every=10,
        )
        assert len(out.kept_paths) == 4


def test_detailed_balance_smoke():
    """Tiny instance: the chain's stationary law must match Gibbs reweighting
    of direct prior samples on the first two moments of the energy."""
    T, n, beta = 1.0, 3, 0.7
    params = ModelParams(beta=beta, horizon_T=T, n_steps=n)
    sweeps = 1_000_000
    out = run_chain(params, McmcConfig(n_sweeps=sweeps, burn_in=20_000, seed=SeedSpec(112)))
    prior = sample_functionals(params.with_beta(0.0), 1_000_000, SeedSpec(113))

    logw = -beta * prior.coulomb
    w = np.exp(logw - logw.max())
    w_sum = w.sum()

    chain_c = out.functionals.coulomb
    for moment in (1, 2):
        x = prior.coulomb ** moment
        ref = float(np.dot(w, x) / w_sum)
        se_ref = float(np.sqrt(np.sum((w * (x - ref)) ** 2)) / w_sum)
        y = chain_c ** moment
        ess = effective_sample_size(y).ess
        se_chain = y.std(ddof=1) / math.sqrt(ess)
        z = (y.mean() - ref) / math.hypot(se_chain, se_ref)
        assert abs(z) < 3, f"moment {moment}: z = {z}"


class TestReweightedEventProb:
    def test_zero_beta_is_empirical_frequency(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=32)
        fs = sample_functionals(params, 2000, SeedSpec(114))
        pred = EventPredicate(RADIUS_ABOVE, 1.0)
        est = reweighted_event_prob(fs, 0.0, pred)
        assert est.value == float(np.mean(fs.rg > 1.0))
        assert est.n_effective == 2000

    def test_zero_threshold_above(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=16)
        fs = sample_functionals(params, 500, SeedSpec(115))
        est = reweighted_event_prob(fs, 0.5, EventPredicate(RADIUS_ABOVE, 0.0))
        assert est.value == 1.0
        assert est.std_error == 0.0

    def test_penalty_favors_spread_paths(self):
        # threshold at the prior median: the penalized probability of
        # {rg > median} exceeds 1/2 by more than 3 SE
        params = ModelParams(beta=0.25, horizon_T=1.0, n_steps=64)
        fs = sample_functionals(params.with_beta(0.0), 20_000, SeedSpec(116))
        median = float(np.median(fs.rg))
        est = reweighted_event_prob(fs, 0.25, EventPredicate(RADIUS_ABOVE, median))
        assert est.value - 0.5 > 3 * est.std_error

    def test_agrees_with_chain_fraction(self):
        # MCMC empirical event fraction vs prior reweighting, 3 combined SE
        beta, T, n = 0.25, 1.0, 64
        params = ModelParams(beta=beta, horizon_T=T, n_steps=n)
        prior = sample_functionals(params.with_beta(0.0), 20_000, SeedSpec(117))
        threshold = float(np.median(prior.rg))
        pred = EventPredicate(RADIUS_ABOVE, threshold)
        rew = reweighted_event_prob(prior, beta, pred)

        out = run_chain(params, McmcConfig(n_sweeps=12_000, burn_in=2000, seed=SeedSpec(118)))
        hits = (out.functionals.rg > threshold).astype(float)
        ess = max(effective_sample_size(hits).ess, 1.0)
        frac = hits.mean()
        se_chain = hits.std(ddof=1) / math.sqrt(ess)
        z = (frac - rew.value) / math.hypot(se_chain, rew.std_error)
        assert abs(z) < 3

    def test_degenerate_weights_flagged(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=32)
        fs = sample_functionals(params, 1000, SeedSpec(119))
        est = reweighted_event_prob(fs, 50.0, EventPredicate(RADIUS_ABOVE, 0.5))
        assert est.unreliable

    def test_validation(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=16)
        fs = sample_functionals(params, 200, SeedSpec(120))
        with pytest.raises(ParameterError):
            reweighted_event_prob(fs, -0.1, EventPredicate(RADIUS_ABOVE, 1.0))

    def test_accepts_list_of_functionals(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=16)
        fs = sample_functionals(params, 300, SeedSpec(121))
        as_list = [fs[i] for i in range(len(fs))]
        est_a = reweighted_event_prob(fs, 0.1, EventPredicate(RADIUS_ABOVE, 0.7))
        est_b = reweighted_event_prob(as_list, 0.1, EventPredicate(RADIUS_ABOVE, 0.7))
        assert est_a.value == est_b.value


def test_ess_result_shape():
    res = EssResult(iact=0.5, ess=100.0)
    assert res.iact == 0.5 and res.ess == 100.0 and not res.degenerate
