"""Gaussian-process threshold simulation."""

import math

import numpy as np
import pytest

from betacpd import (
    CovKernel,
    ThresholdRequest,
    simulate_gaussian_paths,
    simulate_sup_stat,
    threshold_table,
    weight,
)
from betacpd.rng import STAGE_THRESHOLD, substream


def iid_uniform_kernel(x=(0.25, 0.5, 0.75)):
    x = np.asarray(x)
    gamma = np.minimum.outer(x, x) - np.outer(x, x)
    return CovKernel(gamma=gamma, t_star=0)


def make_request(kernel, **kw):
    d = kernel.d
    defaults = dict(
        kernel=kernel,
        n_ratio=2.0,
        gammas=(0.0, 0.25, 0.4),
        alphas=(0.1, 0.05, 0.025, 0.01),
        delta=1e-4,
        a_matrix=np.eye(d) / d,
        m_sim=200,
        reps=500,
        seed=77,
    )
    defaults.update(kw)
    return ThresholdRequest(**defaults)


class TestSimulateSupStat:
    def test_zero_kernel_all_sups_zero(self):
        kern = CovKernel(gamma=np.zeros((3, 3)), t_star=0)
        sups = simulate_sup_stat(make_request(kern, reps=50), 0.25)
        assert np.array_equal(sups, np.zeros(50))

    def test_dual_implementation_on_shared_draws(self):
        # Straight-line scalar reimplementation of one replication, fed the
        # identical substream draws (d=1, Gamma=1, A=1, gamma=0, N=1).
        kern = CovKernel(gamma=np.array([[1.0]]), t_star=0)
        req = make_request(kern, n_ratio=1.0, gammas=(0.0,), a_matrix=np.eye(1), m_sim=150, reps=20)
        sups = simulate_sup_stat(req, 0.0)
        m_sim, horizon = 150, 300
        for rep in range(20):
            rng = substream(req.seed, STAGE_THRESHOLD, rep)
            z = rng.standard_normal((horizon, 1)) @ np.ones((1, 1))
            cum = 0.0
            partials = []
            for v in z[:, 0]:
                cum += v
                partials.append(cum / math.sqrt(m_sim))
            b1 = partials[m_sim - 1]
            best = -math.inf
            for k in range(m_sim + 1, horizon + 1):
                s = k / m_sim
                dc = partials[k - 1] - s * b1
                rho = max((s - 1.0) ** (-0.0) * s ** (0.0 - 1.0), 1e-4)
                best = max(best, rho * rho * dc * dc)
            assert sups[rep] == pytest.approx(best, rel=1e-12)

    def test_variance_matches_s_s_minus_1_gamma(self):
        kern = iid_uniform_kernel()
        b, d = simulate_gaussian_paths(kern, 2.0, 200, 4000, seed=5, s_values=[2.0])
        var = d[:, 0, :].var(axis=0, ddof=1)
        target = 2.0 * 1.0 * np.diag(kern.gamma)
        assert np.abs(var / target - 1.0).max() < 0.1

    def test_bc_increment_covariance_structure(self):
        # Cov(B(s, x_i), B(s', x_j)) ~= min(s, s') * Gamma_ij.
        kern = iid_uniform_kernel()
        s_values = [0.5, 1.0, 2.0]
        b, _ = simulate_gaussian_paths(kern, 2.0, 200, 6000, seed=6, s_values=s_values)
        for si, s in enumerate(s_values):
            for sj, s2 in enumerate(s_values):
                emp = np.cov(b[:, si, 0], b[:, sj, 1])[0, 1]
                target = min(s, s2) * kern.gamma[0, 1]
                assert emp == pytest.approx(target, abs=0.02)

    def test_rejects_non_psd_kernel(self):
        kern = CovKernel(gamma=np.array([[1.0, 0.0], [0.0, -0.2]]), t_star=0)
        with pytest.raises(ValueError):
            simulate_sup_stat(make_request(kern, a_matrix=np.eye(2) / 2, reps=5), 0.0)

    def test_grid_alignment_required(self):
        kern = iid_uniform_kernel()
        with pytest.raises(ValueError):
            simulate_gaussian_paths(kern, 2.0, 200, 5, seed=1, s_values=[1.2345])


class TestThresholdTable:
    def test_alpha_monotonicity_exact(self):
        table = threshold_table(make_request(iid_uniform_kernel(), reps=800))
        for g in table.gammas:
            cs = [table.c(g, a) for a in (0.1, 0.05, 0.025, 0.01)]
            assert cs[0] < cs[1] < cs[2] < cs[3] or np.all(np.diff(cs) >= 0)

    def test_gamma_monotonicity_on_shared_draws(self):
        table = threshold_table(make_request(iid_uniform_kernel(), reps=800))
        for a in table.alphas:
            cs = [table.c(g, a) for g in (0.0, 0.25, 0.4)]
            assert cs[0] <= cs[1] <= cs[2]

    def test_seed_determinism_and_shared_substreams(self):
        req = make_request(iid_uniform_kernel(), reps=300)
        t1 = threshold_table(req)
        t2 = threshold_table(req)
        assert t1.entries == t2.entries
        # A single-gamma run reuses the same per-replication draws.
        sups = simulate_sup_stat(req, 0.25)
        rank = math.ceil(0.95 * 300)
        assert np.sort(sups)[rank - 1] == t1.c(0.25, 0.05)

    def test_parallel_matches_serial(self):
        req = make_request(iid_uniform_kernel(), reps=240)
        serial = threshold_table(req, threads=1)
        parallel = threshold_table(req, threads=2)
        assert serial.entries == parallel.entries

    def test_quantile_rank_convention(self):
        kern = iid_uniform_kernel()
        req = make_request(kern, gammas=(0.0,), alphas=(0.05,), reps=100)
        sups = np.sort(simulate_sup_stat(req, 0.0))
        table = threshold_table(req)
        assert table.c(0.0, 0.05) == sups[math.ceil(0.95 * 100) - 1]

    def test_doubling_reps_within_three_mc_se(self):
        kern = iid_uniform_kernel()
        t1 = threshold_table(make_request(kern, reps=1500))
        t2 = threshold_table(make_request(kern, reps=3000))
        cells = [(g, a) for g in t1.gammas for a in t1.alphas]
        ok = sum(
            abs(t1.entries[c] - t2.entries[c]) < 3.0 * t1.mc_se[c] for c in cells
        )
        assert ok >= math.ceil(0.95 * len(cells))

    def test_horizon_prefix_gives_smaller_thresholds(self):
        # Shorter close-end horizon: the sup runs over a prefix of the same
        # paths, so thresholds cannot increase.
        kern = iid_uniform_kernel()
        long_t = threshold_table(make_request(kern, n_ratio=2.0, reps=400))
        short_t = threshold_table(make_request(kern, n_ratio=0.5, reps=400))
        for key, c_long in long_t.entries.items():
            assert short_t.entries[key] <= c_long
        assert short_t.c(0.0, 0.05) < long_t.c(0.0, 0.05)

    def test_csv_shape(self):
        table = threshold_table(make_request(iid_uniform_kernel(), reps=200))
        lines = table.to_csv().strip().split("\n")
        assert lines[0].startswith("gamma,alpha=0.1")
        assert len(lines) == 1 + len(table.gammas)

    def test_round_trip(self):
        from betacpd.threshold import ThresholdTable

        table = threshold_table(make_request(iid_uniform_kernel(), reps=200))
        back = ThresholdTable.from_dict(table.to_dict())
        assert back.entries == table.entries
        assert back.mc_se == table.mc_se

    def test_validation(self):
        kern = iid_uniform_kernel()
        with pytest.raises(ValueError):
            make_request(kern, m_sim=50)
        with pytest.raises(ValueError):
            make_request(kern, n_ratio=0.0)
        with pytest.raises(ValueError):
            make_request(kern, a_matrix=np.eye(2))
