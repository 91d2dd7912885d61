"""Close-end sequential monitoring.

A calibrated MonitorPlan freezes everything decided before monitoring
starts: the quantile grid, baseline ECDF values, covariance kernel,
weighting matrix, weight exponent and threshold.  A MonitorState consumes
one observation at a time, maintains running indicator counts, and stops
at the first threshold crossing or at the close-end horizon floor((N+1)m).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cpstats import (
    CovKernel,
    QuantileGrid,
    _detector_from_ecdfs,
    check_spd,
    ecdf,
    identity_over_d,
    inverse_spd,
    long_run_covariance,
    make_quantile_grid,
    quad_stat,
)
from .threshold import ThresholdRequest, threshold_table

__all__ = [
    "MonitorConfig",
    "MonitorPlan",
    "MonitorState",
    "DetectionReport",
    "build_plan",
    "calibrate",
    "new_state",
    "step",
    "run_to_completion",
    "save_plan",
    "load_plan",
]

RUNNING = "running"
ALARMED = "alarmed"
COMPLETED = "completed"


@dataclass(frozen=True)
class MonitorConfig:
    """Calibration settings; every monitoring constant must be stated."""

    n_ratio: float
    d: int
    gamma: float
    alpha: float
    delta: float
    t_star: int
    seed: int
    a_matrix: str = "identity_over_d"  # or "gamma_inverse"
    m_sim: int = 1000
    reps: int = 10000
    gamma_source: str = "training"  # or "aux_sample"
    aux_sample: np.ndarray | None = None


@dataclass(frozen=True)
class MonitorPlan:
    """Frozen monitoring configuration."""

    m: int
    n_ratio: float
    gamma: float
    delta: float
    alpha: float
    grid: QuantileGrid
    a_matrix: np.ndarray
    threshold: float
    baseline_ecdf: np.ndarray
    kernel: CovKernel | None = None

    def __post_init__(self):
        object.__setattr__(self, "a_matrix", check_spd(self.a_matrix))
        base = np.asarray(self.baseline_ecdf, dtype=float)
        if base.shape != (self.grid.d,):
            raise ValueError("baseline_ecdf must hold one value per grid point")
        if np.any(np.diff(base) < 0):
            raise ValueError("baseline_ecdf must be nondecreasing across the grid")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        object.__setattr__(self, "baseline_ecdf", base)

    @property
    def horizon_end(self) -> int:
        """Last monitored index: floor((N+1) * m)."""
        return math.floor((self.n_ratio + 1.0) * self.m)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n_ratio": self.n_ratio,
            "gamma": self.gamma,
            "delta": self.delta,
            "alpha": self.alpha,
            "grid": self.grid.to_dict(),
            "a_matrix": self.a_matrix.tolist(),
            "threshold": self.threshold,
            "baseline_ecdf": self.baseline_ecdf.tolist(),
            "kernel": None if self.kernel is None else self.kernel.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonitorPlan":
        return cls(
            m=int(d["m"]),
            n_ratio=float(d["n_ratio"]),
            gamma=float(d["gamma"]),
            delta=float(d["delta"]),
            alpha=float(d["alpha"]),
            grid=QuantileGrid.from_dict(d["grid"]),
            a_matrix=np.asarray(d["a_matrix"]),
            threshold=float(d["threshold"]),
            baseline_ecdf=np.asarray(d["baseline_ecdf"]),
            kernel=None if d.get("kernel") is None else CovKernel.from_dict(d["kernel"]),
        )


@dataclass
class MonitorState:
    """Mutable per-stream detector state; single writer."""

    k: int
    counts: np.ndarray
    trajectory: list = field(default_factory=list)
    status: str = RUNNING
    alarm_index: int | None = None


def build_plan(
    training,
    grid: QuantileGrid,
    kernel: CovKernel | None,
    a_matrix: np.ndarray,
    threshold: float,
    n_ratio: float,
    gamma: float,
    delta: float,
    alpha: float,
) -> MonitorPlan:
    """Assemble a plan from precomputed calibration pieces.

    The baseline ECDF is frozen from ``training`` with the same arithmetic
    the batch detector uses, so streamed and batch statistics agree
    exactly.
    """
    training = np.asarray(training, dtype=float)
    baseline = ecdf(training, grid.x)
    return MonitorPlan(
        m=training.size,
        n_ratio=n_ratio,
        gamma=gamma,
        delta=delta,
        alpha=alpha,
        grid=grid,
        a_matrix=a_matrix,
        threshold=threshold,
        baseline_ecdf=baseline,
        kernel=kernel,
    )


def calibrate(training, cfg: MonitorConfig, threads: int | None = None) -> MonitorPlan:
    """Build grid, covariance kernel, threshold and baseline from training data.

    The grid always comes from the training sample.  The long-run
    covariance comes either from the training sample itself or, when
    ``cfg.gamma_source == "aux_sample"``, from a caller-supplied auxiliary
    sequence (for example a long simulation of a fitted model).
    """
    training = np.asarray(training, dtype=float)
    grid = make_quantile_grid(training, cfg.d)
    if cfg.gamma_source == "training":
        source = training
    elif cfg.gamma_source == "aux_sample":
        if cfg.aux_sample is None:
            raise ValueError("gamma_source='aux_sample' requires cfg.aux_sample")
        source = np.asarray(cfg.aux_sample, dtype=float)
    else:
        raise ValueError(f"unknown gamma_source {cfg.gamma_source!r}")
    kernel = long_run_covariance(source, grid, cfg.t_star)
    if cfg.a_matrix == "identity_over_d":
        a = identity_over_d(cfg.d)
    elif cfg.a_matrix == "gamma_inverse":
        a = inverse_spd(kernel.gamma)
    else:
        a = check_spd(np.asarray(cfg.a_matrix))
    req = ThresholdRequest(
        kernel=kernel,
        n_ratio=cfg.n_ratio,
        gammas=(cfg.gamma,),
        alphas=(cfg.alpha,),
        delta=cfg.delta,
        a_matrix=a,
        m_sim=cfg.m_sim,
        reps=cfg.reps,
        seed=cfg.seed,
    )
    table = threshold_table(req, threads=threads)
    return build_plan(
        training,
        grid,
        kernel,
        a,
        table.c(cfg.gamma, cfg.alpha),
        cfg.n_ratio,
        cfg.gamma,
        cfg.delta,
        cfg.alpha,
    )


def new_state(plan: MonitorPlan) -> MonitorState:
    return MonitorState(k=plan.m, counts=np.zeros(plan.grid.d, dtype=np.int64))


def step(state: MonitorState, plan: MonitorPlan, x_new: float) -> str:
    """Consume one observation; returns 'continue', 'alarm' or 'horizon_end'.

    The alarm comparison is inclusive (quad >= threshold).  Raises on
    observations outside [0, 1] and on stepping a terminated state.
    """
    if state.status != RUNNING:
        raise RuntimeError(f"monitor is not running (status={state.status})")
    if not 0.0 <= x_new <= 1.0:
        raise ValueError(f"observation {x_new!r} outside [0, 1]")
    state.k += 1
    k, m = state.k, plan.m
    idx = np.searchsorted(plan.grid.x, x_new, side="left")
    state.counts[idx:] += 1
    post = state.counts / (k - m)
    d_m = _detector_from_ecdfs(post, plan.baseline_ecdf, m, k)
    quad = quad_stat(d_m, k / m, plan.gamma, plan.delta, plan.a_matrix)
    state.trajectory.append((k, quad))
    if quad >= plan.threshold:
        state.status = ALARMED
        state.alarm_index = k
        return "alarm"
    if k >= plan.horizon_end:
        state.status = COMPLETED
        return "horizon_end"
    return "continue"


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of one monitored stream."""

    alarm_index: int | None
    horizon_end_index: int
    gamma: float
    alpha: float
    threshold: float
    trajectory: tuple
    status: str
    m: int = 0
    true_change_index: int | None = None
    distance: int | None = None

    def to_dict(self) -> dict:
        out = {
            "alarm_index": self.alarm_index,
            "horizon_end_index": self.horizon_end_index,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "trajectory": [[k, q] for k, q in self.trajectory],
        }
        if self.true_change_index is not None:
            out["true_change_index"] = self.true_change_index
            out["distance"] = self.distance
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trajectory_csv(self) -> str:
        lines = ["k,s,quad"]
        for k, q in self.trajectory:
            s = k / self.m if self.m else float("nan")
            lines.append(f"{k},{s!r},{q!r}")
        return "\n".join(lines) + "\n"


def run_to_completion(plan: MonitorPlan, stream, true_change_index: int | None = None) -> DetectionReport:
    """Stream observations until alarm, horizon end, or stream exhaustion.

    ``stream`` holds the observations after the m initial ones, in order.
    When the truth is supplied the report carries the signed distance
    alarm_index - true_change_index.
    """
    state = new_state(plan)
    status = "truncated"
    for x in np.asarray(stream, dtype=float):
        decision = step(state, plan, float(x))
        if decision == "alarm":
            status = "alarm"
            break
        if decision == "horizon_end":
            status = "horizon_end"
            break
    distance = None
    if true_change_index is not None and state.alarm_index is not None:
        distance = state.alarm_index - true_change_index
    return DetectionReport(
        alarm_index=state.alarm_index,
        horizon_end_index=plan.horizon_end,
        gamma=plan.gamma,
        alpha=plan.alpha,
        threshold=plan.threshold,
        trajectory=tuple(state.trajectory),
        status=status,
        m=plan.m,
        true_change_index=true_change_index,
        distance=distance,
    )


def save_plan(plan: MonitorPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plan(path) -> MonitorPlan:
    with open(path, encoding="utf-8") as fh:
        return MonitorPlan.from_dict(json.load(fh))
