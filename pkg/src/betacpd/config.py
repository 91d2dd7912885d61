"""Experiment configuration files and CSV data interchange.

Configs are JSON documents with explicit keys; monitoring constants (m, N,
gamma, alpha, ...) have no silent defaults.  Data files follow one schema:
a ``date`` column (YYYY-MM, strictly increasing by calendar month), a
``value`` column in [0, 1], and optionally one exogenous column.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .model import ArmaSpec, BetaARX

__all__ = [
    "ConfigError",
    "NullSizeConfig",
    "PowerConfig",
    "ThresholdConfig",
    "FitSweepConfig",
    "MonitorRunConfig",
    "PipelineOptions",
    "load_config",
    "save_config",
    "config_to_dict",
    "config_from_dict",
    "read_series_csv",
    "write_series_csv",
    "output_dir",
]


class ConfigError(ValueError):
    """Malformed or incomplete configuration / input schema."""


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise ConfigError(f"missing required key {key!r} in {ctx}")
    return d[key]


def _dgp_from_dict(d: dict, ctx: str):
    model = BetaARX.from_dict(_require(d, "model", ctx))
    exog = d.get("exog")
    return model, None if exog is None else ArmaSpec.from_dict(exog)


def _dgp_to_dict(model: BetaARX, exog: ArmaSpec | None) -> dict:
    return {"model": model.to_dict(), "exog": None if exog is None else exog.to_dict()}


@dataclass(frozen=True)
class NullSizeConfig:
    """Empirical-size experiment under the no-change model."""

    kind = "null_size"
    model: BetaARX
    exog: ArmaSpec | None
    m_values: tuple
    n_ratio: float
    d: int
    gammas: tuple
    alphas: tuple
    delta: float
    t_star: int
    calibration_n: int
    threshold_reps: int
    data_reps: int
    m_sim: int
    seed: int
    a_choice: str = "identity_over_d"
    burn_in: int = 500


@dataclass(frozen=True)
class PowerConfig:
    """Detection-power experiment with an exogenous regime switch."""

    kind = "power"
    model: BetaARX
    exog_pre: ArmaSpec
    exog_post: ArmaSpec
    change_index: int
    m: int
    n_ratio: float
    d: int
    gammas: tuple
    alpha: float
    delta: float
    t_star: int
    calibration_n: int
    threshold_reps: int
    data_reps: int
    m_sim: int
    seed: int
    a_choice: str = "gamma_inverse"
    burn_in: int = 500

    def __post_init__(self):
        s_star = self.change_index / self.m
        if not 1.0 < s_star <= self.n_ratio + 1.0:
            raise ConfigError(
                f"change_index/m = {s_star:.4f} must lie in (1, N+1] = (1, {self.n_ratio + 1.0}]"
            )


@dataclass(frozen=True)
class ThresholdConfig:
    """Stand-alone threshold-table run calibrated from a simulated DGP."""

    kind = "threshold_table"
    model: BetaARX
    exog: ArmaSpec | None
    n_ratio: float
    d: int
    gammas: tuple
    alphas: tuple
    delta: float
    t_star: int
    calibration_n: int
    reps: int
    m_sim: int
    seed: int
    a_choice: str = "identity_over_d"
    burn_in: int = 500


@dataclass(frozen=True)
class FitSweepConfig:
    """AIC/MAE model-selection sweep over (p, q) on a CSV data set."""

    kind = "fit_sweep"
    input_csv: str
    p_values: tuple
    q_values: tuple
    include_no_exog: bool = False
    x_clamp: tuple = (0.001, 0.999)
    w_clamp: tuple = (-10.0, 10.0)


@dataclass(frozen=True)
class MonitorRunConfig:
    """Monitor a CSV stream against a saved plan file."""

    kind = "monitor_run"
    plan_file: str
    input_csv: str


@dataclass(frozen=True)
class PipelineOptions:
    """End-to-end real-data workflow settings."""

    train_end: str  # last YYYY-MM of the training window (inclusive)
    d: int
    gamma: float
    alpha: float
    delta: float
    t_star: int
    p_values: tuple
    q_values: tuple
    seed: int
    a_choice: str = "identity_over_d"
    include_no_exog: bool = False
    m_sim: int = 1000
    threshold_reps: int = 10000
    x_clamp: tuple = (0.001, 0.999)
    w_clamp: tuple = (-10.0, 10.0)


_KINDS = {
    "null_size": NullSizeConfig,
    "power": PowerConfig,
    "threshold_table": ThresholdConfig,
    "fit_sweep": FitSweepConfig,
    "monitor_run": MonitorRunConfig,
    "pipeline": PipelineOptions,
}


def config_to_dict(cfg) -> dict:
    """Serialize any experiment config to a JSON-ready dict."""
    if isinstance(cfg, NullSizeConfig):
        return {
            "kind": "null_size",
            "dgp": _dgp_to_dict(cfg.model, cfg.exog),
            "monitoring": {
                "m_values": list(cfg.m_values),
                "n_ratio": cfg.n_ratio,
                "d": cfg.d,
                "gammas": list(cfg.gammas),
                "alphas": list(cfg.alphas),
                "delta": cfg.delta,
                "t_star": cfg.t_star,
                "a_choice": cfg.a_choice,
            },
            "calibration_n": cfg.calibration_n,
            "threshold_reps": cfg.threshold_reps,
            "data_reps": cfg.data_reps,
            "m_sim": cfg.m_sim,
            "burn_in": cfg.burn_in,
            "seed": cfg.seed,
        }
    if isinstance(cfg, PowerConfig):
        return {
            "kind": "power",
            "dgp": _dgp_to_dict(cfg.model, cfg.exog_pre),
            "post_change": {"exog": cfg.exog_post.to_dict(), "change_index": cfg.change_index},
            "monitoring": {
                "m": cfg.m,
                "n_ratio": cfg.n_ratio,
                "d": cfg.d,
                "gammas": list(cfg.gammas),
                "alpha": cfg.alpha,
                "delta": cfg.delta,
                "t_star": cfg.t_star,
                "a_choice": cfg.a_choice,
            },
            "calibration_n": cfg.calibration_n,
            "threshold_reps": cfg.threshold_reps,
            "data_reps": cfg.data_reps,
            "m_sim": cfg.m_sim,
            "burn_in": cfg.burn_in,
            "seed": cfg.seed,
        }
    if isinstance(cfg, ThresholdConfig):
        return {
            "kind": "threshold_table",
            "dgp": _dgp_to_dict(cfg.model, cfg.exog),
            "monitoring": {
                "n_ratio": cfg.n_ratio,
                "d": cfg.d,
                "gammas": list(cfg.gammas),
                "alphas": list(cfg.alphas),
                "delta": cfg.delta,
                "t_star": cfg.t_star,
                "a_choice": cfg.a_choice,
            },
            "calibration_n": cfg.calibration_n,
            "reps": cfg.reps,
            "m_sim": cfg.m_sim,
            "burn_in": cfg.burn_in,
            "seed": cfg.seed,
        }
    if isinstance(cfg, FitSweepConfig):
        return {
            "kind": "fit_sweep",
            "input_csv": cfg.input_csv,
            "p_values": list(cfg.p_values),
            "q_values": list(cfg.q_values),
            "include_no_exog": cfg.include_no_exog,
            "x_clamp": list(cfg.x_clamp),
            "w_clamp": list(cfg.w_clamp),
        }
    if isinstance(cfg, MonitorRunConfig):
        return {"kind": "monitor_run", "plan_file": cfg.plan_file, "input_csv": cfg.input_csv}
    if isinstance(cfg, PipelineOptions):
        return {
            "kind": "pipeline",
            "train_end": cfg.train_end,
            "d": cfg.d,
            "gamma": cfg.gamma,
            "alpha": cfg.alpha,
            "delta": cfg.delta,
            "t_star": cfg.t_star,
            "p_values": list(cfg.p_values),
            "q_values": list(cfg.q_values),
            "include_no_exog": cfg.include_no_exog,
            "a_choice": cfg.a_choice,
            "m_sim": cfg.m_sim,
            "threshold_reps": cfg.threshold_reps,
            "x_clamp": list(cfg.x_clamp),
            "w_clamp": list(cfg.w_clamp),
            "seed": cfg.seed,
        }
    raise ConfigError(f"unknown config type {type(cfg).__name__}")


def config_from_dict(d: dict):
    """Parse a config dict; inverse of ``config_to_dict``."""
    kind = _require(d, "kind", "config")
    if kind == "null_size":
        model, exog = _dgp_from_dict(_require(d, "dgp", "null_size"), "null_size.dgp")
        mon = _require(d, "monitoring", "null_size")
        return NullSizeConfig(
            model=model,
            exog=exog,
            m_values=tuple(int(m) for m in _require(mon, "m_values", "monitoring")),
            n_ratio=float(_require(mon, "n_ratio", "monitoring")),
            d=int(_require(mon, "d", "monitoring")),
            gammas=tuple(float(g) for g in _require(mon, "gammas", "monitoring")),
            alphas=tuple(float(a) for a in _require(mon, "alphas", "monitoring")),
            delta=float(_require(mon, "delta", "monitoring")),
            t_star=int(_require(mon, "t_star", "monitoring")),
            a_choice=mon.get("a_choice", "identity_over_d"),
            calibration_n=int(_require(d, "calibration_n", "null_size")),
            threshold_reps=int(_require(d, "threshold_reps", "null_size")),
            data_reps=int(_require(d, "data_reps", "null_size")),
            m_sim=int(_require(d, "m_sim", "null_size")),
            burn_in=int(d.get("burn_in", 500)),
            seed=int(_require(d, "seed", "null_size")),
        )
    if kind == "power":
        model, exog_pre = _dgp_from_dict(_require(d, "dgp", "power"), "power.dgp")
        post = _require(d, "post_change", "power")
        mon = _require(d, "monitoring", "power")
        return PowerConfig(
            model=model,
            exog_pre=exog_pre,
            exog_post=ArmaSpec.from_dict(_require(post, "exog", "post_change")),
            change_index=int(_require(post, "change_index", "post_change")),
            m=int(_require(mon, "m", "monitoring")),
            n_ratio=float(_require(mon, "n_ratio", "monitoring")),
            d=int(_require(mon, "d", "monitoring")),
            gammas=tuple(float(g) for g in _require(mon, "gammas", "monitoring")),
            alpha=float(_require(mon, "alpha", "monitoring")),
            delta=float(_require(mon, "delta", "monitoring")),
            t_star=int(_require(mon, "t_star", "monitoring")),
            a_choice=mon.get("a_choice", "gamma_inverse"),
            calibration_n=int(_require(d, "calibration_n", "power")),
            threshold_reps=int(_require(d, "threshold_reps", "power")),
            data_reps=int(_require(d, "data_reps", "power")),
            m_sim=int(_require(d, "m_sim", "power")),
            burn_in=int(d.get("burn_in", 500)),
            seed=int(_require(d, "seed", "power")),
        )
    if kind == "threshold_table":
        model, exog = _dgp_from_dict(_require(d, "dgp", "threshold_table"), "threshold_table.dgp")
        mon = _require(d, "monitoring", "threshold_table")
        return ThresholdConfig(
            model=model,
            exog=exog,
            n_ratio=float(_require(mon, "n_ratio", "monitoring")),
            d=int(_require(mon, "d", "monitoring")),
            gammas=tuple(float(g) for g in _require(mon, "gammas", "monitoring")),
            alphas=tuple(float(a) for a in _require(mon, "alphas", "monitoring")),
            delta=float(_require(mon, "delta", "monitoring")),
            t_star=int(_require(mon, "t_star", "monitoring")),
            a_choice=mon.get("a_choice", "identity_over_d"),
            calibration_n=int(_require(d, "calibration_n", "threshold_table")),
            reps=int(_require(d, "reps", "threshold_table")),
            m_sim=int(_require(d, "m_sim", "threshold_table")),
            burn_in=int(d.get("burn_in", 500)),
            seed=int(_require(d, "seed", "threshold_table")),
        )
    if kind == "fit_sweep":
        return FitSweepConfig(
            input_csv=_require(d, "input_csv", "fit_sweep"),
            p_values=tuple(int(p) for p in _require(d, "p_values", "fit_sweep")),
            q_values=tuple(int(q) for q in _require(d, "q_values", "fit_sweep")),
            include_no_exog=bool(d.get("include_no_exog", False)),
            x_clamp=tuple(d.get("x_clamp", (0.001, 0.999))),
            w_clamp=tuple(d.get("w_clamp", (-10.0, 10.0))),
        )
    if kind == "monitor_run":
        return MonitorRunConfig(
            plan_file=_require(d, "plan_file", "monitor_run"),
            input_csv=_require(d, "input_csv", "monitor_run"),
        )
    if kind == "pipeline":
        return PipelineOptions(
            train_end=_require(d, "train_end", "pipeline"),
            d=int(_require(d, "d", "pipeline")),
            gamma=float(_require(d, "gamma", "pipeline")),
            alpha=float(_require(d, "alpha", "pipeline")),
            delta=float(_require(d, "delta", "pipeline")),
            t_star=int(_require(d, "t_star", "pipeline")),
            p_values=tuple(int(p) for p in _require(d, "p_values", "pipeline")),
            q_values=tuple(int(q) for q in _require(d, "q_values", "pipeline")),
            include_no_exog=bool(d.get("include_no_exog", False)),
            a_choice=d.get("a_choice", "identity_over_d"),
            m_sim=int(d.get("m_sim", 1000)),
            threshold_reps=int(d.get("threshold_reps", 10000)),
            x_clamp=tuple(d.get("x_clamp", (0.001, 0.999))),
            w_clamp=tuple(d.get("w_clamp", (-10.0, 10.0))),
            seed=int(_require(d, "seed", "pipeline")),
        )
    raise ConfigError(f"unknown experiment kind {kind!r}")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return config_from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def save_config(cfg, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- CSV data interchange -------------------------------------------------

_MONTH_FORMAT = "date must be YYYY-MM"


def _parse_month(text: str):
    parts = text.strip().split("-")
    if len(parts) != 2 or len(parts[0]) != 4:
        raise ValueError(_MONTH_FORMAT)
    year, month = int(parts[0]), int(parts[1])
    if not 1 <= month <= 12:
        raise ValueError("month out of range")
    return year, month


def read_series_csv(path, require_monthly: bool = True):
    """Read (dates, values, exog) from the documented CSV schema.

    Collects row-level diagnostics and raises ConfigError listing every bad
    row.  ``exog`` is None when the file has no third column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    if header[:2] != ["date", "value"]:
        raise ConfigError(f"{path}: header must start with 'date,value', got {rows[0]!r}")
    has_exog = len(header) >= 3
    dates, values, exog = [], [], []
    problems = []
    prev = None
    for i, row in enumerate(rows[1:], start=2):
        try:
            ym = _parse_month(row[0])
            val = float(row[1])
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"value {val} outside [0, 1]")
            if prev is not None:
                expect = (prev[0] + (prev[1] == 12), prev[1] % 12 + 1)
                if require_monthly and ym != expect:
                    raise ValueError(f"date {row[0]} not the month after {prev[0]}-{prev[1]:02d}")
                if ym <= prev:
                    raise ValueError("dates must be strictly increasing")
            w = float(row[2]) if has_exog else None
            prev = ym
            dates.append(f"{ym[0]:04d}-{ym[1]:02d}")
            values.append(val)
            if has_exog:
                exog.append(w)
        except (ValueError, IndexError) as exc:
            problems.append(f"row {i}: {exc}")
    if problems:
        raise ConfigError(f"{path}: schema violations:\n  " + "\n  ".join(problems))
    return dates, np.asarray(values), (np.asarray(exog) if has_exog else None)


def write_series_csv(path, dates, values, exog=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "value"] + (["exog"] if exog is not None else []))
        for i, (dt, v) in enumerate(zip(dates, values)):
            row = [dt, repr(float(v))]
            if exog is not None:
                row.append(repr(float(exog[i])))
            writer.writerow(row)


def output_dir(cli_value: str | None) -> str:
    """Resolve the output directory: flag, then env override, then cwd."""
    return cli_value or os.environ.get("BETACPD_OUT", ".")
