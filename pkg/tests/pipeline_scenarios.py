"""Synthetic CSV scenarios for the end-to-end pipeline tests."""

import numpy as np

from betacpd import ArmaSpec, BetaARX, simulate_series
from betacpd.config import PipelineOptions, write_series_csv
from betacpd.experiments import simulate_with_exog_change

TRUE_P = 3
N_MONTHS = 240  # 1998-01 .. 2017-12
TRAIN_END = "2013-12"  # m = 192


def scenario_model() -> BetaARX:
    return BetaARX(phi0=0.5, phi=(0.1, 0.2, 0.2), psi=(0.6, 0.5), tau=100.0)


def scenario_exog() -> ArmaSpec:
    return ArmaSpec(ar=(-0.1,), innovation_sd=1.0, burn_in=300)


def _dates(n=N_MONTHS, start_year=1998):
    return [f"{start_year + i // 12:04d}-{i % 12 + 1:02d}" for i in range(n)]


def _season_trend(dates):
    months = np.array([int(d[5:7]) for d in dates])
    years = np.array([int(d[:4]) for d in dates], dtype=float)
    season = 0.03 * np.sin(2 * np.pi * (months - 1) / 12)
    trend = 0.002 * (years - years[0])
    return season + trend


def write_quiet_scenario(path, seed=1234):
    """Stationary model plus injected seasonality and trend; no change."""
    sp = simulate_series(scenario_model(), scenario_exog(), N_MONTHS, seed=seed)
    dates = _dates()
    raw = sp.x + _season_trend(dates) - 0.05
    assert raw.min() > 0.0 and raw.max() < 1.0
    write_series_csv(path, dates, raw, sp.w)
    return dates, raw, sp.w


def write_change_scenario(path, change_at=200, seed=4321):
    """Exogenous regime collapse inside the monitoring window."""
    sp = simulate_with_exog_change(
        scenario_model(),
        scenario_exog(),
        ArmaSpec(ar=(-0.2, -0.3), ma=(0.5,), innovation_sd=0.1),
        change_at,
        N_MONTHS,
        seed=seed,
        burn_in=300,
    )
    dates = _dates()
    raw = sp.x + _season_trend(dates) - 0.05
    assert raw.min() > 0.0 and raw.max() < 1.0
    write_series_csv(path, dates, raw, sp.w)
    return dates, raw, change_at


def scenario_options(seed=99, **overrides) -> PipelineOptions:
    base = dict(
        train_end=TRAIN_END,
        d=8,
        gamma=0.25,
        alpha=0.05,
        delta=1e-4,
        t_star=9,
        p_values=(1, 2, 3, 4),
        q_values=(0, 1),
        m_sim=600,
        threshold_reps=4000,
        seed=seed,
    )
    base.update(overrides)
    return PipelineOptions(**base)
