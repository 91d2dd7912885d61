"""Monte-Carlo calibration of the monitoring threshold.

Simulates the limiting d-variate Gaussian process of the detector on a
discrete time-ratio grid and extracts upper quantiles of the supremum of
the weighted quadratic-form statistic.  Replication r always uses the
fixed substream (seed, STAGE_THRESHOLD, r), so results are bit-identical
whether replications run serially or in a process pool, and whether one or
many weight exponents are evaluated on the same draws.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cpstats import CovKernel, check_spd, weight
from .rng import STAGE_THRESHOLD, substream

__all__ = [
    "ThresholdRequest",
    "ThresholdTable",
    "simulate_sup_stat",
    "simulate_gaussian_paths",
    "threshold_table",
]


@dataclass(frozen=True)
class ThresholdRequest:
    """Inputs for one threshold calibration run."""

    kernel: CovKernel
    n_ratio: float
    gammas: tuple
    alphas: tuple
    delta: float
    a_matrix: np.ndarray
    m_sim: int = 1000
    reps: int = 10000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "a_matrix", check_spd(self.a_matrix))
        if self.n_ratio <= 0:
            raise ValueError("n_ratio must be positive")
        if self.m_sim < 100:
            raise ValueError("m_sim must be >= 100")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.a_matrix.shape[0] != self.kernel.d:
            raise ValueError("A and the covariance kernel must have matching dimension")


def _psd_factor(kernel: CovKernel) -> np.ndarray:
    """Square-root factor L with L@L.T = gamma, from the eigendecomposition."""
    eigvals, eigvecs = np.linalg.eigh(kernel.gamma)
    if eigvals[0] < -1e-10 * max(1.0, abs(eigvals[-1])):
        raise ValueError("covariance kernel is not PSD; run PSD repair first")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def _horizon(n_ratio: float, m_sim: int) -> int:
    return int(round((n_ratio + 1.0) * m_sim))


def _dc_matrix(rng: np.random.Generator, factor: np.ndarray, m_sim: int, horizon: int):
    """One realization of the limiting detector path.

    Returns (s_grid, D) where row r of D is D_C(s_r, x) for
    s_r = (m_sim + 1 + r) / m_sim, built from horizon iid N(0, gamma)
    increments.
    """
    d = factor.shape[0]
    z = rng.standard_normal((horizon, d)) @ factor.T
    b = np.cumsum(z, axis=0) / math.sqrt(m_sim)
    s_grid = np.arange(m_sim + 1, horizon + 1) / m_sim
    dc = b[m_sim:] - s_grid[:, None] * b[m_sim - 1]
    return s_grid, dc


def _sup_block(kernel, n_ratio, gammas, delta, a, m_sim, seed, rep_lo, rep_hi):
    """Sup statistics for replications rep_lo..rep_hi-1, one column per gamma."""
    factor = _psd_factor(kernel)
    horizon = _horizon(n_ratio, m_sim)
    s_grid = np.arange(m_sim + 1, horizon + 1) / m_sim
    rho2 = [np.asarray(weight(s_grid, g, delta)) ** 2 for g in gammas]
    out = np.empty((rep_hi - rep_lo, len(gammas)))
    for idx, rep in enumerate(range(rep_lo, rep_hi)):
        rng = substream(seed, STAGE_THRESHOLD, rep)
        _, dc = _dc_matrix(rng, factor, m_sim, horizon)
        raw = np.einsum("ij,ij->i", dc @ a, dc)
        for gi in range(len(gammas)):
            out[idx, gi] = np.max(rho2[gi] * raw)
    return out


def _sup_matrix(req: ThresholdRequest, gammas, threads: int | None = None) -> np.ndarray:
    """(reps, len(gammas)) matrix of sup statistics, replication-substreamed."""
    threads = threads or 1
    args = (req.kernel, req.n_ratio, tuple(gammas), req.delta, req.a_matrix, req.m_sim, req.seed)
    if threads <= 1 or req.reps < 2 * threads:
        return _sup_block(*args, 0, req.reps)
    bounds = np.linspace(0, req.reps, threads + 1).astype(int)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_sup_block, *args, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        blocks = [f.result() for f in futures]
    return np.vstack(blocks)


def simulate_sup_stat(req: ThresholdRequest, gamma: float, threads: int | None = None) -> np.ndarray:
    """Simulated sup of the weighted quadratic form, one value per replication."""
    return _sup_matrix(req, (gamma,), threads)[:, 0]


def simulate_gaussian_paths(
    kernel: CovKernel,
    n_ratio: float,
    m_sim: int,
    reps: int,
    seed: int,
    s_values,
):
    """Sample the limiting process at chosen grid-aligned time ratios.

    Returns (b_samples, d_samples), each of shape (reps, len(s_values), d),
    holding B_C(s, x) and D_C(s, x) = B_C(s, x) - s * B_C(1, x).  Used for
    distributional checks of the simulator; shares its substream scheme and
    path construction with the threshold simulation.
    """
    factor = _psd_factor(kernel)
    horizon = _horizon(n_ratio, m_sim)
    s_values = np.asarray(s_values, dtype=float)
    ks = np.round(s_values * m_sim).astype(int)
    if np.any(np.abs(ks - s_values * m_sim) > 1e-9):
        raise ValueError("s_values must lie on the k/m_sim grid")
    if np.any(ks < 1) or np.any(ks > horizon):
        raise ValueError("s_values outside the simulated horizon")
    d = kernel.d
    b_samples = np.empty((reps, s_values.size, d))
    d_samples = np.empty((reps, s_values.size, d))
    for rep in range(reps):
        rng = substream(seed, STAGE_THRESHOLD, rep)
        z = rng.standard_normal((horizon, d)) @ factor.T
        b = np.cumsum(z, axis=0) / math.sqrt(m_sim)
        rows = b[ks - 1]
        b_samples[rep] = rows
        d_samples[rep] = rows - s_values[:, None] * b[m_sim - 1]
    return b_samples, d_samples


@dataclass(frozen=True)
class ThresholdTable:
    """Estimated thresholds c(gamma, alpha) with Monte-Carlo standard errors."""

    entries: dict
    mc_se: dict
    gammas: tuple
    alphas: tuple
    reps: int
    seed: int
    meta: dict = field(default_factory=dict)

    def c(self, gamma: float, alpha: float) -> float:
        return self.entries[(float(gamma), float(alpha))]

    def to_records(self) -> list:
        return [
            {"gamma": g, "alpha": a, "c": self.entries[(g, a)], "mc_se": self.mc_se[(g, a)]}
            for g in self.gammas
            for a in self.alphas
        ]

    def to_dict(self) -> dict:
        return {
            "gammas": list(self.gammas),
            "alphas": list(self.alphas),
            "reps": self.reps,
            "seed": self.seed,
            "records": self.to_records(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdTable":
        entries = {(r["gamma"], r["alpha"]): r["c"] for r in d["records"]}
        mc_se = {(r["gamma"], r["alpha"]): r["mc_se"] for r in d["records"]}
        return cls(
            entries=entries,
            mc_se=mc_se,
            gammas=tuple(d["gammas"]),
            alphas=tuple(d["alphas"]),
            reps=int(d["reps"]),
            seed=int(d["seed"]),
            meta=d.get("meta", {}),
        )

    def to_csv(self) -> str:
        """Threshold grid as CSV, one row per gamma, one column per alpha."""
        header = "gamma," + ",".join(f"alpha={a:g}" for a in self.alphas)
        lines = [header]
        for g in self.gammas:
            cells = ",".join(repr(self.entries[(g, a)]) for a in self.alphas)
            lines.append(f"{g:g},{cells}")
        return "\n".join(lines) + "\n"


def _quantile_with_se(sorted_sups: np.ndarray, alpha: float):
    reps = sorted_sups.size
    rank = max(1, math.ceil((1.0 - alpha) * reps))
    c = float(sorted_sups[rank - 1])
    half = max(1, int(round(math.sqrt(reps))))
    lo = max(rank - half, 1)
    hi = min(rank + half, reps)
    spacing = float(sorted_sups[hi - 1] - sorted_sups[lo - 1])
    if spacing <= 0.0:
        return c, 0.0
    density = (hi - lo) / (reps * spacing)
    se = math.sqrt(alpha * (1.0 - alpha) / reps) / density
    return c, se


def threshold_table(req: ThresholdRequest, threads: int | None = None) -> ThresholdTable:
    """Estimate c(gamma, alpha) for every requested pair.

    All gammas are evaluated on the same Gaussian draws (the weight is
    pointwise nondecreasing in gamma, so thresholds inherit monotonicity in
    gamma exactly); for a fixed gamma, quantiles at different alphas come
    from one sorted sample, making monotonicity in alpha exact.
    """
    sups = _sup_matrix(req, req.gammas, threads)
    entries, mc_se = {}, {}
    for gi, g in enumerate(req.gammas):
        ordered = np.sort(sups[:, gi])
        for a in req.alphas:
            c, se = _quantile_with_se(ordered, a)
            entries[(g, a)] = c
            mc_se[(g, a)] = se
    return ThresholdTable(
        entries=entries,
        mc_se=mc_se,
        gammas=req.gammas,
        alphas=req.alphas,
        reps=req.reps,
        seed=req.seed,
        meta={"m_sim": req.m_sim, "n_ratio": req.n_ratio, "delta": req.delta},
    )
