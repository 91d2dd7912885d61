"""Experiment runners: null-size calibration, detection power, and the
end-to-end real-data workflow on CSV input.

Every runner derives all randomness from the config's master seed through
fixed substream keys (calibration, threshold, per-replication), making
results independent of scheduling; replication blocks can run in a process
pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import (
    NullSizeConfig,
    PipelineOptions,
    PowerConfig,
    ThresholdConfig,
    config_to_dict,
)
from .cpstats import (
    CovKernel,
    QuantileGrid,
    detector_path,
    ecdf,
    identity_over_d,
    inverse_spd,
    long_run_covariance,
    make_quantile_grid,
    weight,
)
from .fitting import SweepResult, detrend, fitted_means, model_selection_sweep, select_min_aic
from .model import ArmaSpec, BetaARX, SeriesPair, _continue_exogenous, simulate_exogenous, simulate_outputs, simulate_series
from .monitor import DetectionReport, build_plan, run_to_completion
from .rng import (
    STAGE_CALIBRATION,
    STAGE_DATA_REP,
    STAGE_EXOG,
    STAGE_OUTPUT,
    derive_seed,
    substream,
)
from .threshold import ThresholdRequest, ThresholdTable, threshold_table

__all__ = [
    "SizeResult",
    "PowerResult",
    "PipelineReport",
    "run_null_size",
    "run_power",
    "run_threshold_table",
    "run_real_pipeline",
]


def _a_matrix_for(choice: str, d: int, kernel: CovKernel) -> np.ndarray:
    if choice == "identity_over_d":
        return identity_over_d(d)
    if choice == "gamma_inverse":
        return inverse_spd(kernel.gamma)
    raise ValueError(f"unknown A-matrix choice {choice!r}")


def _calibrate_from_dgp(model, exog, n, d, t_star, a_choice, seed, burn_in):
    """Grid, kernel and weighting matrix from one long simulated sequence."""
    aux = simulate_series(model, exog, n, seed=derive_seed(seed, STAGE_CALIBRATION), burn_in=burn_in)
    grid = make_quantile_grid(aux.x, d)
    kernel = long_run_covariance(aux.x, grid, t_star)
    return grid, kernel, _a_matrix_for(a_choice, d, kernel)


# --- null-size experiment ---------------------------------------------------


def _null_block(args):
    (model, exog, a, grid, m, horizon, gammas, delta, burn_in, seed, m_index, lo, hi) = args
    s_vals = np.arange(m + 1, horizon + 1) / m
    rho2 = []
    for g in gammas:
        w = np.asarray(weight(s_vals, g, delta))
        rho2.append(w * w)
    sups = np.full((hi - lo, len(gammas)), np.nan)
    failures = []
    for idx, rep in enumerate(range(lo, hi)):
        try:
            rep_seed = derive_seed(seed, STAGE_DATA_REP, m_index, rep)
            sp = simulate_series(model, exog, horizon, seed=rep_seed, burn_in=burn_in)
            base = ecdf(sp.x[:m], grid.x)
            dpath = detector_path(sp.x[m:], base, m, grid)
            raw = np.einsum("ij,ij->i", dpath @ a, dpath)
            for gi in range(len(gammas)):
                sups[idx, gi] = np.max(rho2[gi] * raw)
        except Exception as exc:  # noqa: BLE001 - replication isolation
            failures.append(f"m={m} rep={rep}: {exc}")
    return sups, failures


def _run_blocks(fn, args_common, reps, threads):
    threads = threads or 1
    if threads <= 1 or reps < 2 * threads:
        return [fn(args_common + (0, reps))]
    bounds = np.linspace(0, reps, threads + 1).astype(int)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(fn, args_common + (int(b_lo), int(b_hi)))
            for b_lo, b_hi in zip(bounds[:-1], bounds[1:])
        ]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class SizeResult:
    """Empirical rejection rates per (m, gamma, alpha)."""

    rates: dict
    counts: dict
    failures: dict
    thresholds: ThresholdTable
    grid: QuantileGrid
    kernel: CovKernel
    config: NullSizeConfig
    failure_messages: tuple = ()

    def to_csv(self) -> str:
        lines = ["m,gamma,alpha,rejection_rate,reps,failures"]
        for (m, g, a), rate in sorted(self.rates.items()):
            lines.append(f"{m},{g:g},{a:g},{rate!r},{self.counts[(m, g, a)]},{self.failures[m]}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "thresholds": self.thresholds.to_dict(),
            "rates": [
                {"m": m, "gamma": g, "alpha": a, "rate": r, "reps": self.counts[(m, g, a)]}
                for (m, g, a), r in sorted(self.rates.items())
            ],
            "failures": {str(m): n for m, n in self.failures.items()},
        }


def run_null_size(cfg: NullSizeConfig, threads: int | None = None) -> SizeResult:
    """Empirical size of the monitor under the no-change model.

    Calibrates grid and covariance kernel from one long simulation of the
    null DGP, computes Monte-Carlo thresholds, then measures the fraction
    of data replications whose sup statistic crosses c(gamma, alpha).
    """
    grid, kernel, a = _calibrate_from_dgp(
        cfg.model, cfg.exog, cfg.calibration_n, cfg.d, cfg.t_star, cfg.a_choice, cfg.seed, cfg.burn_in
    )
    req = ThresholdRequest(
        kernel=kernel,
        n_ratio=cfg.n_ratio,
        gammas=cfg.gammas,
        alphas=cfg.alphas,
        delta=cfg.delta,
        a_matrix=a,
        m_sim=cfg.m_sim,
        reps=cfg.threshold_reps,
        seed=cfg.seed,
    )
    table = threshold_table(req, threads=threads)
    rates, counts, failures = {}, {}, {}
    messages = []
    for m_index, m in enumerate(cfg.m_values):
        horizon = math.floor((cfg.n_ratio + 1.0) * m)
        common = (cfg.model, cfg.exog, a, grid, m, horizon, cfg.gammas, cfg.delta, cfg.burn_in, cfg.seed, m_index)
        blocks = _run_blocks(_null_block, common, cfg.data_reps, threads)
        sups = np.vstack([b[0] for b in blocks])
        for b in blocks:
            messages.extend(b[1])
        ok = ~np.isnan(sups[:, 0])
        failures[m] = int(np.count_nonzero(~ok))
        for gi, g in enumerate(cfg.gammas):
            for alpha in cfg.alphas:
                c = table.c(g, alpha)
                rates[(m, g, alpha)] = float(np.mean(sups[ok, gi] >= c))
                counts[(m, g, alpha)] = int(np.count_nonzero(ok))
    return SizeResult(
        rates=rates,
        counts=counts,
        failures=failures,
        thresholds=table,
        grid=grid,
        kernel=kernel,
        config=cfg,
        failure_messages=tuple(messages),
    )


# --- power experiment --------------------------------------------------------


def simulate_with_exog_change(
    model: BetaARX,
    exog_pre: ArmaSpec,
    exog_post: ArmaSpec,
    change_index: int,
    n: int,
    seed: int,
    burn_in: int = 500,
) -> SeriesPair:
    """Series whose exogenous driver switches regime after ``change_index``.

    Outputs t = 1..change_index are driven by the pre-change exogenous
    model; from t = change_index + 1 on, the exogenous values follow the
    post-change model continued from the realized pre-change path (AR lags
    carried over, fresh innovation history).
    """
    if not 0 < change_index < n:
        raise ValueError("change_index must lie strictly inside 1..n-1")
    q_eff = 0 if model.psi is None else model.q
    n_pre = burn_in + q_eff + change_index
    w_pre = simulate_exogenous(exog_pre, n_pre, substream(seed, STAGE_EXOG))
    w_post = _continue_exogenous(exog_post, n - change_index, w_pre, substream(seed, STAGE_EXOG, 1))
    w = np.concatenate([w_pre, w_post])
    return simulate_outputs(model, w, n, substream(seed, STAGE_OUTPUT))


def _power_block(args):
    (model, exog_pre, exog_post, change_index, a, grid, m, horizon, gammas, delta, thresholds, burn_in, seed, lo, hi) = args
    s_vals = np.arange(m + 1, horizon + 1) / m
    rho2 = []
    for g in gammas:
        w = np.asarray(weight(s_vals, g, delta))
        rho2.append(w * w)
    alarms = np.zeros((hi - lo, len(gammas)), dtype=np.int64)
    failures = []
    for idx, rep in enumerate(range(lo, hi)):
        try:
            rep_seed = derive_seed(seed, STAGE_DATA_REP, 0, rep)
            sp = simulate_with_exog_change(
                model, exog_pre, exog_post, change_index, horizon, rep_seed, burn_in
            )
            base = ecdf(sp.x[:m], grid.x)
            dpath = detector_path(sp.x[m:], base, m, grid)
            raw = np.einsum("ij,ij->i", dpath @ a, dpath)
            for gi, g in enumerate(gammas):
                crossing = np.nonzero(rho2[gi] * raw >= thresholds[gi])[0]
                alarms[idx, gi] = m + 1 + crossing[0] if crossing.size else -1
        except Exception as exc:  # noqa: BLE001 - replication isolation
            alarms[idx, :] = -2
            failures.append(f"rep={rep}: {exc}")
    return alarms, failures


@dataclass(frozen=True)
class PowerResult:
    """Detection rates and mean alarm delays per gamma."""

    detection_rate: dict
    mean_delay: dict
    n_detected: dict
    thresholds: ThresholdTable
    grid: QuantileGrid
    kernel: CovKernel
    config: PowerConfig
    failures: int = 0
    failure_messages: tuple = ()

    def to_csv(self) -> str:
        lines = ["gamma,rejection_pct,mean_delay,detected,reps,threshold"]
        for g in self.config.gammas:
            lines.append(
                f"{g:g},{100.0 * self.detection_rate[g]!r},{self.mean_delay[g]!r},"
                f"{self.n_detected[g]},{self.config.data_reps},{self.thresholds.c(g, self.config.alpha)!r}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "thresholds": self.thresholds.to_dict(),
            "per_gamma": [
                {
                    "gamma": g,
                    "rejection_pct": 100.0 * self.detection_rate[g],
                    "mean_delay": self.mean_delay[g],
                    "detected": self.n_detected[g],
                }
                for g in self.config.gammas
            ],
            "failures": self.failures,
        }


def run_power(cfg: PowerConfig, threads: int | None = None) -> PowerResult:
    """Detection power and delay under an exogenous regime switch.

    Calibration (grid, kernel, A, thresholds) uses the pre-change model
    only; each replication monitors a fresh series with the change at
    ``cfg.change_index`` and reports the first crossing index.
    """
    grid, kernel, a = _calibrate_from_dgp(
        cfg.model, cfg.exog_pre, cfg.calibration_n, cfg.d, cfg.t_star, cfg.a_choice, cfg.seed, cfg.burn_in
    )
    req = ThresholdRequest(
        kernel=kernel,
        n_ratio=cfg.n_ratio,
        gammas=cfg.gammas,
        alphas=(cfg.alpha,),
        delta=cfg.delta,
        a_matrix=a,
        m_sim=cfg.m_sim,
        reps=cfg.threshold_reps,
        seed=cfg.seed,
    )
    table = threshold_table(req, threads=threads)
    thresholds = tuple(table.c(g, cfg.alpha) for g in cfg.gammas)
    horizon = math.floor((cfg.n_ratio + 1.0) * cfg.m)
    common = (
        cfg.model, cfg.exog_pre, cfg.exog_post, cfg.change_index, a, grid,
        cfg.m, horizon, cfg.gammas, cfg.delta, thresholds, cfg.burn_in, cfg.seed,
    )
    blocks = _run_blocks(_power_block, common, cfg.data_reps, threads)
    alarms = np.vstack([b[0] for b in blocks])
    messages = [msg for b in blocks for msg in b[1]]
    ok = alarms[:, 0] != -2
    detection, delay, detected = {}, {}, {}
    for gi, g in enumerate(cfg.gammas):
        col = alarms[ok, gi]
        hit = col > 0
        detection[g] = float(np.mean(hit)) if col.size else 0.0
        delay[g] = float(np.mean(col[hit] - cfg.change_index)) if hit.any() else float("nan")
        detected[g] = int(np.count_nonzero(hit))
    return PowerResult(
        detection_rate=detection,
        mean_delay=delay,
        n_detected=detected,
        thresholds=table,
        grid=grid,
        kernel=kernel,
        config=cfg,
        failures=int(np.count_nonzero(~ok)),
        failure_messages=tuple(messages),
    )


# --- stand-alone threshold table ---------------------------------------------


def run_threshold_table(cfg: ThresholdConfig, threads: int | None = None):
    """Calibrate from the configured DGP and estimate the threshold table."""
    grid, kernel, a = _calibrate_from_dgp(
        cfg.model, cfg.exog, cfg.calibration_n, cfg.d, cfg.t_star, cfg.a_choice, cfg.seed, cfg.burn_in
    )
    req = ThresholdRequest(
        kernel=kernel,
        n_ratio=cfg.n_ratio,
        gammas=cfg.gammas,
        alphas=cfg.alphas,
        delta=cfg.delta,
        a_matrix=a,
        m_sim=cfg.m_sim,
        reps=cfg.reps,
        seed=cfg.seed,
    )
    return threshold_table(req, threads=threads), grid, kernel


# --- real-data pipeline --------------------------------------------------------


@dataclass(frozen=True)
class PipelineReport:
    """End-to-end workflow output: detrend, sweep, calibration, detection."""

    dates: tuple
    raw_values: np.ndarray
    adjusted: np.ndarray
    detrend_model: object
    sweep: object
    best: tuple
    plan: object
    detection: DetectionReport
    fitted_mu: np.ndarray
    fitted_retrended: np.ndarray
    options: PipelineOptions
    detected_date: str | None

    def fitted_csv(self) -> str:
        lines = ["date,raw,adjusted,fitted_mu,fitted_retrended"]
        for i, dt in enumerate(self.dates):
            mu = self.fitted_mu[i]
            rt = self.fitted_retrended[i]
            mu_s = "" if np.isnan(mu) else repr(float(mu))
            rt_s = "" if np.isnan(rt) else repr(float(rt))
            lines.append(f"{dt},{self.raw_values[i]!r},{self.adjusted[i]!r},{mu_s},{rt_s}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "options": config_to_dict(self.options),
            "train_size": self.plan.m,
            "best_model": {"p": self.best[0], "q": self.best[1]},
            "sweep": self.sweep.to_dict(),
            "detrend": self.detrend_model.to_dict(),
            "plan": self.plan.to_dict(),
            "detection": self.detection.to_dict(),
            "detected_date": self.detected_date,
        }


def run_real_pipeline(csv_values, opts: PipelineOptions, threads: int | None = None) -> PipelineReport:
    """Detrend, select a model by AIC, calibrate, and monitor a CSV series.

    ``csv_values`` is the (dates, values, exog) triple from
    ``read_series_csv``.  The detrending regression is fitted on the
    training window only and applied to the whole series; the adjusted
    series is recentered at the training mean, clipped into [0, 1], and
    monitored after the training window.
    """
    dates, values, exog = csv_values
    if opts.train_end not in dates:
        raise ValueError(f"train_end {opts.train_end!r} not found among the input dates")
    m = dates.index(opts.train_end) + 1
    n = len(dates)
    if m >= n:
        raise ValueError("train_end leaves no observations to monitor")
    years = np.array([int(dt[:4]) for dt in dates], dtype=float)
    months = np.array([int(dt[5:7]) for dt in dates], dtype=int)

    train_mean = float(np.mean(values[:m]))
    dm, _ = detrend(values[:m], years[:m], months[:m], offset=train_mean)
    adjusted = dm.adjust(values, years, months)
    adjusted01 = np.clip(adjusted, 0.0, 1.0)

    w_train = exog[:m] if exog is not None else np.zeros(m)
    train_pair = SeriesPair(x=adjusted01[:m], w=w_train)
    q_values = tuple(opts.q_values) if exog is not None else ()
    include_no_exog = opts.include_no_exog or exog is None
    if not q_values and not include_no_exog:
        raise ValueError("no exogenous column: enable include_no_exog or provide exog data")
    sweep = model_selection_sweep(
        train_pair,
        opts.p_values,
        q_values if q_values else [0],
        include_no_exog=include_no_exog,
        x_clamp=opts.x_clamp,
        w_clamp=opts.w_clamp,
    )
    if not q_values:
        # Without exogenous data only the no-exog cells are meaningful.
        kept = {k: v for k, v in sweep.results.items() if k[1] is None}
        sweep = SweepResult(results=kept, errors=sweep.errors, best=select_min_aic(kept))
    if sweep.best is None:
        raise RuntimeError(f"every sweep cell failed: {sweep.errors}")
    best_fit = sweep.results[sweep.best]

    grid = make_quantile_grid(adjusted01[:m], opts.d)
    kernel = long_run_covariance(adjusted01[:m], grid, opts.t_star)
    a = _a_matrix_for(opts.a_choice, opts.d, kernel)
    req = ThresholdRequest(
        kernel=kernel,
        n_ratio=(n - m) / m,
        gammas=(opts.gamma,),
        alphas=(opts.alpha,),
        delta=opts.delta,
        a_matrix=a,
        m_sim=opts.m_sim,
        reps=opts.threshold_reps,
        seed=opts.seed,
    )
    table = threshold_table(req, threads=threads)
    plan = build_plan(
        adjusted01[:m], grid, kernel, a, table.c(opts.gamma, opts.alpha),
        (n - m) / m, opts.gamma, opts.delta, opts.alpha,
    )
    detection = run_to_completion(plan, adjusted01[m:])
    detected_date = dates[detection.alarm_index - 1] if detection.alarm_index else None

    # Conditional means on the training window, re-trended for display.
    l0 = max(best_fit.model.p, best_fit.model.q or 0)
    mu = fitted_means(best_fit.model, train_pair)
    fitted_mu = np.full(n, np.nan)
    fitted_mu[l0:m] = mu
    fitted_retrended = np.full(n, np.nan)
    fitted_retrended[l0:m] = dm.retrend(mu, years[l0:m], months[l0:m])

    return PipelineReport(
        dates=tuple(dates),
        raw_values=values,
        adjusted=adjusted,
        detrend_model=dm,
        sweep=sweep,
        best=sweep.best,
        plan=plan,
        detection=detection,
        fitted_mu=fitted_mu,
        fitted_retrended=fitted_retrended,
        options=opts,
        detected_date=detected_date,
    )
