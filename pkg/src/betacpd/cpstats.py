"""Empirical-CDF change-point machinery.

Quantile-grid selection, ECDF evaluation, the scaled CUSUM difference
between post-baseline and baseline ECDFs, the monitoring weight function,
the weighted quadratic-form statistic, and truncated-lag estimation of the
long-run covariance kernel of the indicator process.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantileGrid",
    "CovKernel",
    "DetectorVector",
    "ecdf",
    "make_quantile_grid",
    "long_run_covariance",
    "centered_partial_sum",
    "detector",
    "detector_path",
    "weight",
    "quad_stat",
    "identity_over_d",
    "clip_to_psd",
    "inverse_spd",
]


@dataclass(frozen=True)
class QuantileGrid:
    """Sampled probabilities u and the matching empirical quantiles x.

    Both vectors are strictly increasing; the x values must be distinct so
    the indicator coordinates are not redundant.
    """

    u: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if u.shape != x.shape or u.ndim != 1 or u.size == 0:
            raise ValueError("u and x must be nonempty 1-d arrays of equal length")
        if np.any(u <= 0.0) or np.any(u >= 1.0) or np.any(np.diff(u) <= 0):
            raise ValueError("u must be strictly increasing inside (0, 1)")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid values x must be strictly increasing (distinct)")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x", x)

    @property
    def d(self) -> int:
        return self.x.size

    def to_dict(self) -> dict:
        return {"u": self.u.tolist(), "x": self.x.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileGrid":
        return cls(u=np.asarray(d["u"]), x=np.asarray(d["x"]))


@dataclass(frozen=True)
class CovKernel:
    """Truncated-lag long-run covariance estimate on a quantile grid."""

    gamma: np.ndarray
    t_star: int
    psd_adjusted: bool = False
    clip_magnitude: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("gamma must be a square matrix")
        object.__setattr__(self, "gamma", g)

    @property
    def d(self) -> int:
        return self.gamma.shape[0]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma.tolist(),
            "t_star": self.t_star,
            "psd_adjusted": self.psd_adjusted,
            "clip_magnitude": self.clip_magnitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovKernel":
        return cls(
            gamma=np.asarray(d["gamma"]),
            t_star=int(d["t_star"]),
            psd_adjusted=bool(d.get("psd_adjusted", False)),
            clip_magnitude=float(d.get("clip_magnitude", 0.0)),
        )


@dataclass(frozen=True)
class DetectorVector:
    """One evaluation of the weighted detector at time ratio s."""

    s: float
    d_m: np.ndarray
    quad: float


def ecdf(sample, x):
    """Fraction of sample values <= x (right-continuous step function).

    ``x`` may be a scalar or an array of query points.
    """
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("ecdf requires a nonempty sample")
    s = np.sort(sample)
    out = np.searchsorted(s, x, side="right") / s.size
    return float(out) if np.ndim(x) == 0 else out


def make_quantile_grid(training, d: int) -> QuantileGrid:
    """Equally spaced probabilities u_i = i/(d+1) and their sample quantiles.

    x_i is the order statistic of rank round(n * u_i) (1-based, clamped to
    [1, n]).  Duplicate quantiles arising from heavily tied data are
    perturbed upward to the next distinct sample value; if the sample has
    fewer than d distinct values this fails.
    """
    training = np.asarray(training, dtype=float)
    n = training.size
    if d < 1:
        raise ValueError("d must be >= 1")
    if np.unique(training).size < d:
        raise ValueError(f"training sample has fewer than d={d} distinct values")
    s = np.sort(training)
    u = np.arange(1, d + 1) / (d + 1)
    ranks = np.clip(np.round(n * u).astype(int), 1, n)
    x = s[ranks - 1]
    distinct = np.unique(s)
    for i in range(1, d):
        if x[i] <= x[i - 1]:
            j = np.searchsorted(distinct, x[i - 1], side="right")
            if j >= distinct.size:
                raise ValueError("cannot resolve duplicate grid values: too few distinct samples")
            x[i] = distinct[j]
    return QuantileGrid(u=u, x=x)


def indicator_matrix(sample, grid_x) -> np.ndarray:
    """Matrix I[t, i] = 1(sample[t] <= x_i) as float64."""
    sample = np.asarray(sample, dtype=float)
    grid_x = np.asarray(grid_x, dtype=float)
    return (sample[:, None] <= grid_x[None, :]).astype(float)


def long_run_covariance(sample, grid: QuantileGrid, t_star: int) -> CovKernel:
    """Truncated-lag long-run covariance of the indicator process.

    gamma[i, j] = sum over |h| <= t_star of the sample cross-covariance of
    1(X_t <= x_i) and 1(X_{t+h} <= x_j), each lag normalized by (n - |h|)
    and centered at the full-sample indicator means.  The result is
    symmetrized and eigenvalue-clipped to positive semidefinite; clipping
    beyond 1e-6 in spectral norm triggers a warning.
    """
    sample = np.asarray(sample, dtype=float)
    n = sample.size
    if t_star < 0:
        raise ValueError("t_star must be >= 0")
    if n < 20 * max(t_star, 1):
        raise ValueError(f"sample of length {n} is too short for t_star={t_star} (need >= {20 * max(t_star, 1)})")
    ind = indicator_matrix(sample, grid.x)
    centered = ind - ind.mean(axis=0)
    gamma = centered.T @ centered / n
    for h in range(1, t_star + 1):
        c_h = centered[:-h].T @ centered[h:] / (n - h)
        gamma += c_h + c_h.T
    gamma = 0.5 * (gamma + gamma.T)
    repaired, adjusted, magnitude = clip_to_psd(gamma)
    if magnitude > 1e-6:
        warnings.warn(
            f"long-run covariance required PSD clipping of magnitude {magnitude:.3e}",
            stacklevel=2,
        )
    return CovKernel(gamma=repaired, t_star=t_star, psd_adjusted=adjusted, clip_magnitude=magnitude)


def clip_to_psd(mat: np.ndarray):
    """Clip negative eigenvalues to zero.

    Returns (repaired, adjusted_flag, clip_magnitude) where the magnitude is
    the most negative eigenvalue removed (spectral norm of the change).
    """
    sym = 0.5 * (mat + mat.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= 0.0:
        return sym, False, 0.0
    clipped = np.clip(eigvals, 0.0, None)
    repaired = (eigvecs * clipped) @ eigvecs.T
    repaired = 0.5 * (repaired + repaired.T)
    return repaired, True, float(-eigvals[0])


def inverse_spd(mat: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Inverse of a symmetric PSD matrix, ridge-regularized if near-singular."""
    sym = 0.5 * (np.asarray(mat, float) + np.asarray(mat, float).T)
    eigvals = np.linalg.eigvalsh(sym)
    if eigvals[0] < ridge:
        sym = sym + ridge * np.eye(sym.shape[0])
    inv = np.linalg.inv(sym)
    return 0.5 * (inv + inv.T)


def identity_over_d(d: int) -> np.ndarray:
    """Diagonal weighting matrix with entries 1/d."""
    return np.eye(d) / d


def centered_partial_sum(sample, m: int, s: float, x: float, f0) -> float:
    """Scaled centered partial sum of indicators.

    (1/sqrt(m)) * sum_{t=1}^{floor(m*s)} (1(X_t <= x) - F0(x)), where f0 is
    a callable reference CDF.  s = 0 gives an empty sum.
    """
    k = math.floor(m * s)
    if s < 0:
        raise ValueError("s must be >= 0")
    sample = np.asarray(sample, dtype=float)
    if k > sample.size:
        raise ValueError(f"floor(m*s) = {k} exceeds sample length {sample.size}")
    if k == 0:
        return 0.0
    count = float(np.count_nonzero(sample[:k] <= x))
    return (count - k * f0(x)) / math.sqrt(m)


def _detector_from_ecdfs(post_ecdf, base_ecdf, m: int, k: int) -> np.ndarray:
    # Shared by the batch detector and the streaming monitor so the two
    # paths are bitwise identical.
    return ((k - m) / math.sqrt(m)) * (post_ecdf - base_ecdf)


def detector(sample, m: int, k: int, grid: QuantileGrid) -> np.ndarray:
    """CUSUM-type ECDF difference D(m, k, x) on the grid.

    Component i equals ((k-m)/sqrt(m)) * (F_{(m+1):k}(x_i) - F_{1:m}(x_i)).
    """
    sample = np.asarray(sample, dtype=float)
    if not m < k <= sample.size:
        raise IndexError(f"need m < k <= len(sample), got m={m}, k={k}, n={sample.size}")
    base = ecdf(sample[:m], grid.x)
    post_counts = (sample[m:k, None] <= grid.x[None, :]).sum(axis=0)
    post = post_counts / (k - m)
    return _detector_from_ecdfs(post, base, m, k)


def detector_path(stream, baseline_ecdf, m: int, grid: QuantileGrid) -> np.ndarray:
    """Detector rows for every k = m+1 .. m+len(stream).

    ``stream`` holds the post-baseline observations; ``baseline_ecdf`` the
    frozen F_{1:m}(x_i) values.  Row r corresponds to k = m + r + 1 and is
    computed with the same arithmetic as ``detector``.
    """
    stream = np.asarray(stream, dtype=float)
    counts = np.cumsum(stream[:, None] <= grid.x[None, :], axis=0)
    k_minus_m = np.arange(1, stream.size + 1, dtype=float)
    post = counts / k_minus_m[:, None]
    return (k_minus_m[:, None] / math.sqrt(m)) * (post - np.asarray(baseline_ecdf))


def weight(s, gamma: float, delta: float):
    """Monitoring weight max{(s-1)^(-gamma) * s^(gamma-1), delta}.

    Defined for s >= 1; at s = 1 the value saturates to +inf when gamma > 0
    (monitoring itself only evaluates s > 1).  Vectorized over s.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not 0.0 <= gamma < 0.5:
        raise ValueError("gamma must lie in [0, 0.5)")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 1.0):
        raise ValueError("weight is defined for s >= 1")
    with np.errstate(divide="ignore"):
        term = np.where(
            (s_arr == 1.0) & (gamma > 0.0),
            np.inf,
            (s_arr - 1.0) ** (-gamma) * s_arr ** (gamma - 1.0),
        )
    out = np.maximum(term, delta)
    return float(out) if s_arr.ndim == 0 else out


def quad_stat(d_m, s: float, gamma: float, delta: float, a: np.ndarray) -> float:
    """Weighted quadratic form rho^2(s, gamma) * d_m' A d_m."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] != a.shape[1] or not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
        raise ValueError("weighting matrix A must be symmetric")
    d_m = np.asarray(d_m, dtype=float)
    rho = weight(s, gamma, delta)
    return float(rho * rho * (d_m @ a @ d_m))


def check_spd(a: np.ndarray) -> np.ndarray:
    """Validate that A is symmetric positive definite; returns A as float64."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A must be square")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12):
        raise ValueError("A must be symmetric")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError("A must be positive definite") from exc
    return a
