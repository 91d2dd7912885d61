"""Command-line front end.

Every subcommand is a thin shell over a library call and writes
self-describing artifacts (results plus the resolved config and seeds)
into the output directory.  Exit codes: 0 success, 2 configuration or
usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    FitSweepConfig,
    MonitorRunConfig,
    NullSizeConfig,
    PipelineOptions,
    PowerConfig,
    ThresholdConfig,
    config_to_dict,
    load_config,
    output_dir,
    read_series_csv,
    write_series_csv,
)
from .experiments import run_null_size, run_power, run_real_pipeline, run_threshold_table
from .fitting import fit, model_selection_sweep
from .model import SeriesPair, simulate_series
from .monitor import load_plan, run_to_completion, save_plan
from .cpstats import long_run_covariance, make_quantile_grid

CONFIG_EXIT = 2
NUMERIC_EXIT = 3


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_json(path, payload):
    _write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _series_from_csv(path) -> tuple:
    dates, values, exog = read_series_csv(path)
    w = exog if exog is not None else np.zeros(len(values))
    return dates, SeriesPair(x=values, w=w), exog is not None


def _resolve_seed(args, cfg=None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if cfg is not None and hasattr(cfg, "seed"):
        return cfg.seed
    raise ConfigError("a --seed is required for stochastic commands")


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if not isinstance(cfg, ThresholdConfig):
        raise ConfigError("simulate expects a threshold_table-style config carrying the DGP")
    seed = _resolve_seed(args, cfg)
    sp = simulate_series(cfg.model, cfg.exog, args.n, seed=seed, burn_in=cfg.burn_in)
    out = output_dir(args.out)
    dates = [f"{2000 + i // 12:04d}-{i % 12 + 1:02d}" for i in range(len(sp))]
    write_series_csv(os.path.join(out, "series.csv"), dates, sp.x, sp.w)
    _write_json(
        os.path.join(out, "series.json"),
        {"config": config_to_dict(cfg), "n": args.n, "seed": seed},
    )
    print(os.path.join(out, "series.csv"))
    return 0


def _cmd_fit(args) -> int:
    _, pair, has_exog = _series_from_csv(args.input)
    q = None if args.no_exog else args.q
    if q is not None and not has_exog:
        raise ConfigError("input has no exogenous column; pass --no-exog")
    result = fit(pair, args.p, q)
    out = output_dir(args.out)
    _write_json(os.path.join(out, "fit.json"), {"input": args.input, **result.to_dict()})
    print(os.path.join(out, "fit.json"))
    return 0


def _parse_range(text: str) -> list:
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def _cmd_sweep(args) -> int:
    _, pair, has_exog = _series_from_csv(args.input)
    q_values = _parse_range(args.q_range) if has_exog else []
    include_no_exog = args.include_no_exog or not has_exog
    sweep = model_selection_sweep(
        pair, _parse_range(args.p_range), q_values or [0], include_no_exog=include_no_exog
    )
    out = output_dir(args.out)
    _write(os.path.join(out, "sweep.csv"), sweep.to_csv())
    _write_json(
        os.path.join(out, "sweep.json"),
        {"input": args.input, "p_range": args.p_range, "q_range": args.q_range, **sweep.to_dict()},
    )
    print(os.path.join(out, "sweep.csv"))
    return 0


def _cmd_gamma(args) -> int:
    _, pair, _ = _series_from_csv(args.input)
    grid = make_quantile_grid(pair.x, args.d)
    kernel = long_run_covariance(pair.x, grid, args.t_star)
    out = output_dir(args.out)
    _write_json(
        os.path.join(out, "gamma.json"),
        {"input": args.input, "d": args.d, "t_star": args.t_star, "grid": grid.to_dict(), "kernel": kernel.to_dict()},
    )
    print(os.path.join(out, "gamma.json"))
    return 0


def _cmd_threshold(args) -> int:
    cfg = load_config(args.config)
    if not isinstance(cfg, ThresholdConfig):
        raise ConfigError(f"threshold expects kind=threshold_table, got {type(cfg).__name__}")
    cfg = dataclasses.replace(cfg, seed=_resolve_seed(args, cfg))
    table, grid, kernel = run_threshold_table(cfg, threads=args.threads)
    out = output_dir(args.out)
    _write(os.path.join(out, "thresholds.csv"), table.to_csv())
    _write_json(
        os.path.join(out, "thresholds.json"),
        {"config": config_to_dict(cfg), "table": table.to_dict(), "grid": grid.to_dict(), "kernel": kernel.to_dict()},
    )
    print(os.path.join(out, "thresholds.csv"))
    return 0


def _cmd_calibrate(args) -> int:
    from .monitor import MonitorConfig, calibrate

    _, pair, _ = _series_from_csv(args.input)
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    needed = ["n_ratio", "d", "gamma", "alpha", "delta", "t_star"]
    missing = [k for k in needed if k not in raw]
    if missing:
        raise ConfigError(f"monitor config missing keys: {missing}")
    seed = args.seed if args.seed is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("a --seed is required for stochastic commands")
    cfg = MonitorConfig(
        n_ratio=float(raw["n_ratio"]),
        d=int(raw["d"]),
        gamma=float(raw["gamma"]),
        alpha=float(raw["alpha"]),
        delta=float(raw["delta"]),
        t_star=int(raw["t_star"]),
        seed=int(seed),
        a_matrix=raw.get("a_matrix", "identity_over_d"),
        m_sim=int(raw.get("m_sim", 1000)),
        reps=int(raw.get("reps", 10000)),
    )
    plan = calibrate(pair.x, cfg, threads=args.threads)
    out = output_dir(args.out)
    save_plan(plan, os.path.join(out, "plan.json"))
    print(os.path.join(out, "plan.json"))
    return 0


def _read_stream(path):
    """Observations from 'index,value' lines (file or '-') or a schema CSV."""
    if path == "-":
        lines = [ln.strip() for ln in sys.stdin if ln.strip()]
    else:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError("empty stream input")
    first = lines[0].lower().replace(" ", "")
    if first.startswith("date,value"):
        _, values, _ = read_series_csv(path)
        return values
    values = []
    for i, ln in enumerate(lines, start=1):
        parts = ln.split(",")
        try:
            values.append(float(parts[-1]))
        except ValueError as exc:
            raise ConfigError(f"stream line {i}: {exc}") from exc
    return np.asarray(values)


def _cmd_monitor(args) -> int:
    plan = load_plan(args.plan)
    stream = _read_stream(args.input)
    report = run_to_completion(plan, stream)
    out = output_dir(args.out)
    _write(os.path.join(out, "report.json"), report.to_json() + "\n")
    _write(os.path.join(out, "trajectory.csv"), report.trajectory_csv())
    print(os.path.join(out, "report.json"))
    return 0


def _cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None and hasattr(cfg, "seed"):
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.fast and isinstance(cfg, NullSizeConfig):
        cfg = dataclasses.replace(cfg, threshold_reps=1000, data_reps=500)
    if args.fast and isinstance(cfg, PowerConfig):
        cfg = dataclasses.replace(cfg, threshold_reps=1000, data_reps=100)
    out = output_dir(args.out)
    if isinstance(cfg, NullSizeConfig):
        result = run_null_size(cfg, threads=args.threads)
        _write(os.path.join(out, "size.csv"), result.to_csv())
        _write_json(os.path.join(out, "size.json"), result.to_dict())
        print(os.path.join(out, "size.csv"))
        return 0
    if isinstance(cfg, PowerConfig):
        result = run_power(cfg, threads=args.threads)
        _write(os.path.join(out, "power.csv"), result.to_csv())
        _write_json(os.path.join(out, "power.json"), result.to_dict())
        print(os.path.join(out, "power.csv"))
        return 0
    if isinstance(cfg, ThresholdConfig):
        table, grid, kernel = run_threshold_table(cfg, threads=args.threads)
        _write(os.path.join(out, "thresholds.csv"), table.to_csv())
        _write_json(
            os.path.join(out, "thresholds.json"),
            {"config": config_to_dict(cfg), "table": table.to_dict(), "grid": grid.to_dict(), "kernel": kernel.to_dict()},
        )
        print(os.path.join(out, "thresholds.csv"))
        return 0
    if isinstance(cfg, FitSweepConfig):
        _, pair, has_exog = _series_from_csv(cfg.input_csv)
        sweep = model_selection_sweep(
            pair,
            cfg.p_values,
            cfg.q_values if has_exog else [0],
            include_no_exog=cfg.include_no_exog or not has_exog,
            x_clamp=cfg.x_clamp,
            w_clamp=cfg.w_clamp,
        )
        _write(os.path.join(out, "sweep.csv"), sweep.to_csv())
        _write_json(os.path.join(out, "sweep.json"), {"config": config_to_dict(cfg), **sweep.to_dict()})
        print(os.path.join(out, "sweep.csv"))
        return 0
    if isinstance(cfg, MonitorRunConfig):
        plan = load_plan(cfg.plan_file)
        report = run_to_completion(plan, _read_stream(cfg.input_csv))
        _write(os.path.join(out, "report.json"), report.to_json() + "\n")
        _write(os.path.join(out, "trajectory.csv"), report.trajectory_csv())
        print(os.path.join(out, "report.json"))
        return 0
    if isinstance(cfg, PipelineOptions):
        csv_in = args.input
        if csv_in is None:
            raise ConfigError("pipeline experiments need --input data.csv")
        report = run_real_pipeline(read_series_csv(csv_in), cfg, threads=args.threads)
        _write_json(os.path.join(out, "pipeline.json"), report.to_dict())
        _write(os.path.join(out, "fitted.csv"), report.fitted_csv())
        _write(os.path.join(out, "sweep.csv"), report.sweep.to_csv())
        _write(os.path.join(out, "trajectory.csv"), report.detection.trajectory_csv())
        print(os.path.join(out, "pipeline.json"))
        return 0
    raise ConfigError(f"unhandled config type {type(cfg).__name__}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="betacpd",
        description="Beta AR(p) compositional series: simulation, fitting, and sequential change-point monitoring.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, threads=False, inp=None):
        p.add_argument("--out", "-o", default=None, help="output directory (default: $BETACPD_OUT or cwd)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="master seed (mandatory for stochastic runs)")
        if threads:
            p.add_argument("--threads", type=int, default=None, help="process-pool size for replications")
        if inp:
            p.add_argument("--input", required=inp == "required", help="input CSV (date,value[,exog])")

    p = sub.add_parser("simulate", help="simulate a series from a configured DGP")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    common(p, seed=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit one Beta ARX model to a CSV series")
    common(p, inp="required")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--no-exog", action="store_true")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("sweep", help="AIC/MAE model-selection sweep over (p, q)")
    common(p, inp="required")
    p.add_argument("--p-range", required=True, help="e.g. 1:4 or 1,2,3")
    p.add_argument("--q-range", required=True, help="e.g. 0:2")
    p.add_argument("--include-no-exog", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gamma", help="estimate the long-run covariance kernel from data")
    common(p, inp="required")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--t-star", type=int, required=True)
    p.set_defaults(func=_cmd_gamma)

    p = sub.add_parser("threshold", help="Monte-Carlo threshold table from a configured DGP")
    p.add_argument("--config", required=True)
    common(p, seed=True, threads=True)
    p.set_defaults(func=_cmd_threshold)

    p = sub.add_parser("calibrate", help="build a monitor plan from training data")
    common(p, seed=True, threads=True, inp="required")
    p.add_argument("--config", required=True, help="monitoring config JSON")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("monitor", help="run a saved plan over a stream")
    common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--input", required=True, help="stream file ('index,value' lines), '-' for stdin, or schema CSV")
    p.set_defaults(func=_cmd_monitor)

    p = sub.add_parser("experiment", help="run a configured experiment end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", default=None, help="must match the config kind when given")
    common(p, seed=True, threads=True, inp="optional")
    p.add_argument("--fast", action="store_true", help="reduced replication counts for smoke runs")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "experiment" and args.kind is not None:
            cfg = load_config(args.config)
            if cfg.kind != args.kind:
                raise ConfigError(f"--kind {args.kind!r} does not match config kind {cfg.kind!r}")
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
