"""Conditional MLE, model selection, detrending."""

import math

import numpy as np
import pytest

from betacpd import (
    ArmaSpec,
    BetaARX,
    SeriesPair,
    detrend,
    fit,
    fitted_means,
    hessian_standard_errors,
    model_selection_sweep,
    negative_loglik,
    negative_loglik_gradient,
    select_min_aic,
    simulate_exogenous,
    simulate_series,
)
from betacpd.fitting import aic_of

from conftest import null_exog, null_model


def uniform_pair(n, value=0.5):
    return SeriesPair(x=np.full(n, value), w=np.zeros(n))


class TestNegativeLoglik:
    def test_uniform_beta_density_zero(self):
        # Beta(1, 1) is the uniform density: every term contributes log 1.
        model = BetaARX(phi0=0.0, psi=(0.0,), tau=2.0)
        assert negative_loglik(model, uniform_pair(101)) == pytest.approx(0.0, abs=1e-10)

    def test_beta22_closed_form_per_term(self):
        # Beta(2, 2) density at 0.5 equals 1.5; two conditional terms.
        model = BetaARX(phi0=0.0, psi=(0.0,), tau=4.0)
        val = negative_loglik(model, uniform_pair(2))
        assert val == pytest.approx(-2.0 * math.log(1.5), abs=1e-12)

    def test_term_by_term_oracle_p1_q1(self):
        model = BetaARX(phi0=0.2, phi=(0.3,), psi=(0.4, -0.2), tau=30.0)
        sp = simulate_series(model, ArmaSpec(ar=(-0.1,), innovation_sd=1.0), 10, seed=77, burn_in=50)
        x, w = sp.x, sp.w
        lo, hi = model.x_clamp
        total = 0.0
        for t in range(1, 10):
            xl = min(max(x[t - 1], lo), hi)
            eta = 0.2 + 0.3 * math.log(xl / (1 - xl)) + 0.4 * np.clip(w[t], -10, 10) - 0.2 * np.clip(w[t - 1], -10, 10)
            mu = 1 / (1 + math.exp(-eta))
            a, b = 30.0 * mu, 30.0 * (1 - mu)
            y = min(max(x[t], lo), hi)
            total -= (
                math.lgamma(30.0) - math.lgamma(a) - math.lgamma(b)
                + (a - 1) * math.log(y) + (b - 1) * math.log(1 - y)
            )
        assert negative_loglik(model, sp) == pytest.approx(total, rel=1e-12)

    def test_degenerate_mean_returns_inf(self):
        model = BetaARX(phi0=900.0, psi=(0.0,), tau=5.0)
        assert negative_loglik(model, uniform_pair(20)) == math.inf

    def test_too_short_series_rejected(self):
        model = BetaARX(phi0=0.0, phi=(0.1, 0.1), psi=(0.0,), tau=5.0)
        with pytest.raises(ValueError):
            negative_loglik(model, uniform_pair(3))


class TestGradient:
    def test_matches_finite_differences_at_random_points(self):
        sp = simulate_series(null_model(), null_exog(), 300, seed=5)
        rng = np.random.default_rng(6)
        for _ in range(20):
            theta = np.concatenate([
                rng.uniform(-1, 1, 1),
                rng.uniform(-0.3, 0.3, 3),
                rng.uniform(-1, 1, 1),
                rng.uniform(5, 200, 1),
            ])
            model = BetaARX(phi0=theta[0], phi=tuple(theta[1:4]), psi=(theta[4],), tau=theta[5])
            grad = negative_loglik_gradient(model, sp)
            num = np.empty_like(grad)
            for j in range(theta.size):
                h = 1e-5 * max(1.0, abs(theta[j]))
                up, dn = theta.copy(), theta.copy()
                up[j] += h
                dn[j] -= h
                mk = lambda v: BetaARX(phi0=v[0], phi=tuple(v[1:4]), psi=(v[4],), tau=v[5])
                num[j] = (negative_loglik(mk(up), sp) - negative_loglik(mk(dn), sp)) / (2 * h)
            rel = np.abs(grad - num) / np.maximum(np.abs(num), 1.0)
            assert rel.max() < 1e-5


class TestFit:
    def test_aic_formula(self):
        assert aic_of(-300.0, 3, 8) == 628.0
        assert aic_of(-300.0, 3, None) == 610.0

    def test_aic_and_mae_recomputable_from_model(self):
        sp = simulate_series(null_model(), null_exog(), 800, seed=9)
        res = fit(sp, 2, 0)
        assert res.aic == aic_of(res.loglik, 2, 0)
        assert res.loglik == pytest.approx(-negative_loglik(res.model, sp), abs=1e-9)
        mu = fitted_means(res.model, sp)
        y = np.clip(sp.x, *res.model.x_clamp)[max(2, 0):]
        assert res.mae == pytest.approx(float(np.mean(np.abs(y - mu))), abs=1e-12)

    def test_iid_fit_matches_sample_mean(self):
        model = BetaARX(phi0=0.6, psi=None, tau=50.0)
        sp = SeriesPair(x=np.asarray(
            __import__("betacpd").simulate_outputs(model, None, 2000, 3).x
        ), w=np.zeros(2000))
        res = fit(sp, 0, None)
        mu_hat = 1 / (1 + math.exp(-res.model.phi0))
        assert mu_hat == pytest.approx(sp.x.mean(), abs=0.005)
        # A deliberately misspecified fixed-parameter evaluation is worse.
        bad = BetaARX(phi0=-0.5, psi=None, tau=50.0)
        assert -negative_loglik(bad, sp) < res.loglik
        assert aic_of(-negative_loglik(bad, sp), 0, None) > res.aic

    def test_parameter_recovery_single_run(self):
        sp = simulate_series(null_model(), null_exog(), 5000, seed=42)
        res = fit(sp, 3, 0)
        assert res.converged
        se, _ = hessian_standard_errors(res.model, sp)
        truth = np.array([0.5, 0.1, 0.2, 0.2, 0.5, 100.0])
        est = np.array([res.model.phi0, *res.model.phi, *res.model.psi, res.model.tau])
        assert np.all(np.abs(est - truth) < 4.0 * se)

    def test_likelihood_never_worse_than_start(self):
        # Even on awkward data the reported likelihood beats the LS start.
        rng = np.random.default_rng(12)
        x = np.clip(rng.beta(0.7, 0.4, 120), 1e-4, 1 - 1e-4)
        sp = SeriesPair(x=x, w=rng.normal(0, 1, 120))
        from betacpd.fitting import _design, _start_values, _nll_terms

        y, reg, _ = _design(sp, 1, 0, (0.001, 0.999), (-10, 10))
        theta0 = _start_values(y, reg)
        start_nll, _ = _nll_terms(theta0, y, reg, np.log(y), np.log1p(-y))
        res = fit(sp, 1, 0)
        assert -res.loglik <= start_nll + 1e-9

    def test_tau_positive_always(self):
        rng = np.random.default_rng(13)
        x = np.clip(rng.uniform(0.45, 0.55, 60), 0, 1)
        res = fit(SeriesPair(x=x, w=np.zeros(60)), 0, None)
        assert res.model.tau > 0

    def test_constant_series_rejected(self):
        with pytest.raises(ValueError):
            fit(uniform_pair(50), 0, 0)

    def test_no_exog_flag_distinct_from_q0(self):
        sp = simulate_series(null_model(), null_exog(), 500, seed=14)
        r_q0 = fit(sp, 1, 0)
        r_none = fit(sp, 1, None)
        assert r_q0.model.q == 0 and r_none.model.q is None
        assert r_q0.model.n_params == r_none.model.n_params + 1


class TestSweep:
    def test_single_cell_equals_direct_fit(self):
        sp = simulate_series(null_model(), null_exog(), 600, seed=15)
        sweep = model_selection_sweep(sp, [2], [0])
        direct = fit(sp, 2, 0)
        assert sweep.results[(2, 0)] == direct
        assert sweep.best == (2, 0)

    def test_aic_ordering_invariant_to_constant_shift(self):
        sp = simulate_series(null_model(), null_exog(), 600, seed=16)
        sweep = model_selection_sweep(sp, [1, 2], [0])
        import dataclasses

        shifted = {
            key: dataclasses.replace(r, loglik=r.loglik + 12.5, aic=r.aic - 25.0)
            for key, r in sweep.results.items()
        }
        assert select_min_aic(shifted) == sweep.best

    def test_cell_errors_recorded_sweep_continues(self):
        sp = SeriesPair(x=np.clip(np.random.default_rng(17).beta(2, 2, 40), 0, 1), w=np.zeros(40))
        sweep = model_selection_sweep(sp, [1, 30], [0])
        assert (30, 0) in sweep.errors
        assert (1, 0) in sweep.results

    def test_selection_consistency_monte_carlo(self):
        # Truth p=3 (q=0); the minimum-AIC cell over p in 1..4, q in 0..1
        # must select p=3 in at least 80% of 200 replications.
        hits = 0
        for rep in range(200):
            sp = simulate_series(null_model(), null_exog(), 400, seed=100_000 + rep, burn_in=300)
            sweep = model_selection_sweep(sp, [1, 2, 3, 4], [0, 1])
            hits += sweep.best[0] == 3
        assert hits >= 160


class TestDetrend:
    def test_pure_trend_absorbed(self):
        years = np.repeat(np.arange(2010, 2020), 12).astype(float)
        months = np.tile(np.arange(1, 13), 10)
        values = 2.0 * years
        _, adjusted = detrend(values, years, months)
        assert np.abs(adjusted).max() < 1e-8

    def test_pure_seasonal_absorbed(self):
        years = np.repeat(np.arange(2010, 2020), 12).astype(float)
        months = np.tile(np.arange(1, 13), 10)
        month_means = np.linspace(0.3, 0.8, 12)
        values = month_means[months - 1]
        _, adjusted = detrend(values, years, months)
        assert np.abs(adjusted).max() < 1e-10

    def test_mixed_residual_balance(self):
        rng = np.random.default_rng(18)
        years = np.repeat(np.arange(2000, 2025), 12).astype(float)
        months = np.tile(np.arange(1, 13), 25)
        season = np.sin(2 * np.pi * (months - 1) / 12) * 0.05
        noise = rng.normal(0, 0.02, years.size)
        values = 0.5 + 0.001 * (years - 2000) + season + noise
        _, adjusted = detrend(values, years, months)
        # Month-wise means of the adjusted series agree within MC error.
        per_month = np.array([adjusted[months == m].mean() for m in range(1, 13)])
        se = 0.02 / math.sqrt(25)
        assert np.abs(per_month - per_month.mean()).max() < 2.5 * se

    def test_retrend_restores_exactly(self):
        rng = np.random.default_rng(19)
        years = np.repeat(np.arange(2010, 2018), 12).astype(float)
        months = np.tile(np.arange(1, 13), 8)
        values = rng.uniform(0.2, 0.8, years.size)
        dm, adjusted = detrend(values, years, months, offset=0.37)
        back = dm.retrend(adjusted, years, months)
        assert np.allclose(back, values, atol=1e-12)

    def test_rank_deficient_rejected(self):
        years = np.full(24, 2015.0)
        months = np.tile(np.arange(1, 13), 2)
        with pytest.raises(ValueError):
            detrend(np.random.default_rng(20).uniform(0, 1, 24), years, months)

    def test_month_range_validated(self):
        with pytest.raises(ValueError):
            detrend(np.zeros(3), np.zeros(3), np.array([0, 1, 2]))

    def test_round_trip_dict(self):
        from betacpd import DetrendModel

        dm = DetrendModel(intercept=0.1, year_coef=0.01, month_effects=tuple(np.arange(11) / 100), offset=0.5)
        assert DetrendModel.from_dict(dm.to_dict()) == dm
