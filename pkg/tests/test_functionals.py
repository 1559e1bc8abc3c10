import math

import numpy as np
import pytest

from coulombwalk import (
    ModelParams,
    ParameterError,
    SeedSpec,
    coulomb_delta_pivot,
    coulomb_energy,
    holder_check,
    log_gibbs_weight,
    path_functionals,
    radius_gyration_centered,
    radius_gyration_pairwise,
    sample_path,
)
from coulombwalk.core import DegeneratePathError, TimeGrid
from coulombwalk.functionals import (
    batch_functionals,
    coulomb_energy_diagnostics,
    _rg_centered,
)
from coulombwalk.paths import PathSample, apply_pivot, random_rotation, straight_line_path
from conftest import make_path

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def discrete_coulomb_mean(T, n):
    """Exact prior mean of the discretized energy: node pairs at lag m are
    centered Gaussians with covariance m*dt*I3, and E 1/|Z| = sqrt(2/(pi s^2))."""
    dt = T / n
    m = np.arange(1, n + 1)
    return dt * dt * np.sum(2 * (n + 1 - m) * np.sqrt(2.0 / (np.pi * m * dt)))


def discrete_rg_sq_mean(T, n):
    """Exact prior mean of rg^2: E|X_i - X_j|^2 = 3 dt |i-j| summed over pairs."""
    return T * (n + 2) / (n + 1)


class TestCoulombEnergy:
    def test_straight_line_hand_value(self):
        assert coulomb_energy(straight_line_path(2)) == 5.0

    def test_beta_free(self):
        # the energy is a functional of the path only
        p = make_path(n=32, beta=0.0)
        q = PathSample.from_increments(p.grid, p.increments)
        assert coulomb_energy(p) == coulomb_energy(q)

    def test_prior_mean_against_exact_discrete_oracle(self):
        # independent oracle: the Gaussian pair law summed over the grid
        T, n, m = 1.0, 256, 3000
        params = ModelParams(beta=0.0, horizon_T=T, n_steps=n)
        vals = np.array(
            [coulomb_energy(sample_path(params, SeedSpec(21, i))) for i in range(m)]
        )
        se = vals.std(ddof=1) / math.sqrt(m)
        assert abs(vals.mean() - discrete_coulomb_mean(T, n)) < 3 * se

    def test_continuum_oracle_with_allowance(self):
        # the continuum value (8/3)sqrt(2/pi) T^(3/2) = 2.12769...; the node-pair
        # discretization omits the diagonal band, an O(sqrt(dt)) deficit
        # (6.28% at n=256, exactly computable), so the spec's 5% allowance is
        # exceeded; see the acceptance suite for the as-stated check.
        cont = (8.0 / 3.0) * SQRT_2_OVER_PI
        assert discrete_coulomb_mean(1.0, 256) == pytest.approx(cont * 0.9372, rel=1e-3)
        # the deficit vanishes under refinement
        assert abs(discrete_coulomb_mean(1.0, 65536) - cont) / cont < 0.005

    def test_determinism_across_workers(self):
        p = make_path(n=700, seed=9)
        values = {coulomb_energy(p, workers=w) for w in (1, 2, 4, 8)}
        assert len(values) == 1

    def test_single_vs_batch_bitwise(self):
        params = ModelParams(beta=0.0, horizon_T=1.0, n_steps=100)
        paths = [sample_path(params, SeedSpec(31, i)) for i in range(5)]
        posb = np.array([p.positions for p in paths])
        series = batch_functionals(posb, params.dt)
        for p, c, r in zip(paths, series.coulomb, series.rg):
            assert coulomb_energy(p) == c
            assert _rg_centered(p.positions) == r

    def test_clamping_and_degeneracy(self):
        # one coincident pair among 2080 is tolerated and counted
        grid = TimeGrid(1.0, 64)
        inc = SeedSpec(40).generator().standard_normal((64, 3)) * 0.1
        inc[30] = 0.0  # nodes 30 and 31 coincide
        p = PathSample.from_increments(grid, inc)
        value, clamped = coulomb_energy_diagnostics(p)
        assert clamped == 1
        assert math.isfinite(value)
        # a fully collapsed path trips the degeneracy error
        flat = PathSample.from_increments(TimeGrid(1.0, 8), np.zeros((8, 3)))
        with pytest.raises(DegeneratePathError):
            coulomb_energy(flat)


class TestPivotDelta:
    def test_identity_rotation_zero(self):
        p = make_path(n=30)
        assert coulomb_delta_pivot(p, 7, np.eye(3)) == 0.0

    def test_k_equals_n_zero(self, rng):
        p = make_path(n=30)
        assert coulomb_delta_pivot(p, 30, random_rotation(rng)) == 0.0

    def test_matches_full_recomputation(self, rng):
        for trial in range(20):
            n = int(rng.integers(8, 200))
            p = make_path(n=n, seed=50 + trial)
            k = int(rng.integers(1, n))
            rot = random_rotation(rng)
            delta = coulomb_delta_pivot(p, k, rot)
            full = coulomb_energy(apply_pivot(p, k, rot)) - coulomb_energy(p)
            assert delta == pytest.approx(full, rel=1e-9, abs=1e-12)

    def test_validation(self, rng):
        p = make_path(n=8)
        with pytest.raises(ParameterError):
            coulomb_delta_pivot(p, 0, np.eye(3))
        with pytest.raises(ParameterError):
            coulomb_delta_pivot(p, 3, np.diag([2.0, 1.0, 0.5]))


class TestGyrationRadius:
    def test_two_node_hand_value(self):
        p = straight_line_path(1)
        assert radius_gyration_pairwise(p) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
        assert radius_gyration_centered(p) == pytest.approx(1 / math.sqrt(2), rel=1e-15)

    def test_three_node_hand_value(self):
        p = straight_line_path(2)
        assert radius_gyration_pairwise(p) == pytest.approx(2 / math.sqrt(3), rel=1e-15)

    def test_translation_invariance_of_centered_form(self):
        p = make_path(n=50)
        shifted = p.positions + np.array([3.0, -7.0, 11.0])
        assert _rg_centered(shifted) == pytest.approx(_rg_centered(p.positions), rel=1e-12)

    def test_identity_pairwise_vs_centered(self):
        # O(n^2) brute-force form against the O(n) centroid identity
        for i, n in enumerate([2, 3, 17, 128, 513, 1024]):
            p = make_path(n=n, seed=60 + i)
            a = radius_gyration_pairwise(p)
            b = radius_gyration_centered(p)
            assert abs(a - b) <= 1e-10 * a

    def test_prior_second_moment(self):
        T, n, m = 1.0, 256, 3000
        params = ModelParams(beta=0.0, horizon_T=T, n_steps=n)
        sq = np.array(
            [radius_gyration_centered(sample_path(params, SeedSpec(22, i))) ** 2 for i in range(m)]
        )
        se = sq.std(ddof=1) / math.sqrt(m)
        assert abs(sq.mean() - discrete_rg_sq_mean(T, n)) < 3 * se


class TestHolder:
    def test_straight_line_hand_values(self):
        res = holder_check(straight_line_path(2))
        assert res.m2 == pytest.approx(2.0, rel=1e-15)
        assert res.m_neg1 == pytest.approx(5.0 / 6.0, rel=1e-15)
        assert res.product == pytest.approx(math.sqrt(2.0) * 5.0 / 6.0, rel=1e-15)

    def test_equality_when_all_distances_equal(self):
        # two nodes: a single pair distance, product exactly 1
        res = holder_check(straight_line_path(1))
        assert res.product == pytest.approx(1.0, rel=1e-15)
        # equilateral triangle: all three pair distances equal
        inc = np.array([[1.0, 0.0, 0.0], [-0.5, math.sqrt(3.0) / 2.0, 0.0]])
        tri = PathSample.from_increments(TimeGrid(2.0, 2), inc)
        res = holder_check(tri)
        assert res.product == pytest.approx(1.0, rel=1e-12)

    def test_inequality_on_sampled_paths(self):
        for i in range(200):
            p = make_path(T=1.0, n=64, seed=70, stream=i)
            assert holder_check(p).product >= 1.0 - 1e-12

    def test_normalized_chain_matches_functionals(self):
        # sqrt(m2) * m_neg1 >= 1 is the pair-normalized form of
        # "radius times normalized energy >= 1"
        p = make_path(n=32, seed=71)
        res = holder_check(p)
        n_nodes = 33
        n_ordered = n_nodes * (n_nodes - 1)
        coulomb = coulomb_energy(p)
        m_neg1 = coulomb / (p.dt * p.dt * n_ordered)
        assert m_neg1 == pytest.approx(res.m_neg1, rel=1e-12)
        assert math.sqrt(res.m2) * m_neg1 >= 1.0 - 1e-12


class TestEuclideanInvariance:
    def test_global_rotation(self, rng):
        p = make_path(n=100, seed=80)
        for _ in range(5):
            rot = random_rotation(rng)
            q = PathSample.from_increments(p.grid, p.increments @ rot.T)
            assert coulomb_energy(q) == pytest.approx(coulomb_energy(p), rel=1e-10)
            assert radius_gyration_pairwise(q) == pytest.approx(
                radius_gyration_pairwise(p), rel=1e-10
            )
            assert radius_gyration_centered(q) == pytest.approx(
                radius_gyration_centered(p), rel=1e-10
            )


class TestLogGibbsWeight:
    def test_zero_beta(self):
        assert log_gibbs_weight(make_path(n=16), 0.0) == 0.0

    def test_straight_line(self):
        assert log_gibbs_weight(straight_line_path(2), 1.0) == -5.0

    def test_linear_in_beta(self):
        p = make_path(n=16)
        assert log_gibbs_weight(p, 0.4) == pytest.approx(2 * log_gibbs_weight(p, 0.2), rel=1e-12)

    def test_rejects_negative_beta(self):
        with pytest.raises(ParameterError):
            log_gibbs_weight(make_path(n=8), -1.0)


def test_path_functionals_bundle():
    p = straight_line_path(2)
    f = path_functionals(p)
    assert f.coulomb == 5.0
    assert f.rg == pytest.approx(2 / math.sqrt(3), rel=1e-12)
    assert f.endpoint_x1 == 2.0
    assert f.clamped_pairs == 0
