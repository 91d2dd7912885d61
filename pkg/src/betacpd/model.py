"""Generalized Beta AR(p) model with exogenous variables: types and simulation.

The observation model is a conditional Beta distribution

    X_t | past ~ Beta(tau * mu_t, tau * (1 - mu_t)),

whose mean follows a logit-linear recursion in p lagged (clamped-logit)
transformed outputs and the current plus q lagged (clamped) exogenous
values:

    logit(mu_t) = phi0 + sum_i phi_i * clamped_logit(X_{t-i})
                       + sum_j psi_j * clamp(W_{t-j}).

Exogenous sequences are Gaussian ARMA processes.  All simulation is exact
(Beta and normal draws from numpy Generator streams) and deterministic for
a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .rng import STAGE_EXOG, STAGE_OUTPUT, as_generator, substream

DEFAULT_X_CLAMP = (0.001, 0.999)
DEFAULT_W_CLAMP = (-10.0, 10.0)

__all__ = [
    "DEFAULT_X_CLAMP",
    "DEFAULT_W_CLAMP",
    "BetaARX",
    "ArmaSpec",
    "SeriesPair",
    "logit",
    "inverse_logit",
    "clamped_logit",
    "clamp",
    "simulate_exogenous",
    "simulate_outputs",
    "simulate_series",
]


def logit(u):
    """log(u / (1 - u)) for u strictly inside (0, 1).

    Raises ValueError outside the open interval; use ``clamped_logit`` for
    boundary-safe evaluation.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("logit requires 0 < u < 1")
    out = np.log(u / (1.0 - u))
    return float(out) if out.ndim == 0 else out


def inverse_logit(eta):
    """Numerically stable expit: 1 / (1 + exp(-eta))."""
    eta = np.asarray(eta, dtype=float)
    out = np.where(eta >= 0, 1.0 / (1.0 + np.exp(-eta)), np.exp(eta) / (1.0 + np.exp(eta)))
    return float(out) if out.ndim == 0 else out


def clamp(w, bounds=DEFAULT_W_CLAMP):
    """min(max(lo, w), hi)."""
    lo, hi = bounds
    out = np.minimum(np.maximum(lo, np.asarray(w, dtype=float)), hi)
    return float(out) if out.ndim == 0 else out


def clamped_logit(u, bounds=DEFAULT_X_CLAMP):
    """logit of u clamped into [lo, hi] with 0 < lo < hi < 1.

    Maps the closed unit interval onto [logit(lo), logit(hi)]; never raises
    for u in [0, 1].
    """
    lo, hi = bounds
    return logit(clamp(u, (lo, hi)))


def _check_clamp_x(bounds):
    lo, hi = bounds
    if not (0.0 < lo < hi < 1.0):
        raise ValueError(f"output clamp must satisfy 0 < lo < hi < 1, got {bounds}")


@dataclass(frozen=True)
class BetaARX:
    """Parameterization of the Beta AR(p) model with exogenous input.

    ``psi`` holds the exogenous coefficients for lags 0..q (lag 0 is the
    contemporaneous term).  ``psi=None`` requests a model with no exogenous
    variable at all, which is distinct from q=0.
    """

    phi0: float
    phi: tuple = ()
    psi: tuple | None = (0.0,)
    tau: float = 1.0
    x_clamp: tuple = DEFAULT_X_CLAMP
    w_clamp: tuple = DEFAULT_W_CLAMP

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        if self.psi is not None:
            psi = tuple(float(v) for v in self.psi)
            if len(psi) == 0:
                raise ValueError("psi must have length q+1; use psi=None for no exogenous term")
            object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "x_clamp", (float(self.x_clamp[0]), float(self.x_clamp[1])))
        object.__setattr__(self, "w_clamp", (float(self.w_clamp[0]), float(self.w_clamp[1])))
        if not self.tau > 0:
            raise ValueError(f"dispersion tau must be positive, got {self.tau}")
        _check_clamp_x(self.x_clamp)
        if not self.w_clamp[0] < self.w_clamp[1]:
            raise ValueError(f"exogenous clamp must satisfy lo < hi, got {self.w_clamp}")

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def q(self) -> int | None:
        """Exogenous lag order, or None for a no-exogenous model."""
        return None if self.psi is None else len(self.psi) - 1

    @property
    def n_params(self) -> int:
        """Free parameters: phi0, phi, psi (if any) and tau."""
        return 1 + self.p + (0 if self.psi is None else len(self.psi)) + 1

    def to_dict(self) -> dict:
        return {
            "phi0": self.phi0,
            "phi": list(self.phi),
            "psi": None if self.psi is None else list(self.psi),
            "tau": self.tau,
            "x_clamp": list(self.x_clamp),
            "w_clamp": list(self.w_clamp),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BetaARX":
        return cls(
            phi0=float(d["phi0"]),
            phi=tuple(d.get("phi", ())),
            psi=None if d.get("psi") is None else tuple(d["psi"]),
            tau=float(d["tau"]),
            x_clamp=tuple(d.get("x_clamp", DEFAULT_X_CLAMP)),
            w_clamp=tuple(d.get("w_clamp", DEFAULT_W_CLAMP)),
        )


@dataclass(frozen=True)
class ArmaSpec:
    """Gaussian ARMA generator for the exogenous sequence.

    Convention: W_t = sum_i ar[i-1]*W_{t-i} + e_t + sum_j ma[j-1]*e_{t-j}
    with e_t iid N(0, innovation_sd^2).  The AR polynomial must be
    stationary (all characteristic roots strictly inside the unit circle).
    """

    ar: tuple = ()
    ma: tuple = ()
    innovation_sd: float = 1.0
    burn_in: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(v) for v in self.ar))
        object.__setattr__(self, "ma", tuple(float(v) for v in self.ma))
        if not self.innovation_sd > 0:
            raise ValueError("innovation_sd must be positive")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.ar:
            roots = np.roots([1.0] + [-a for a in self.ar])
            if roots.size and np.max(np.abs(roots)) >= 1.0 - 1e-10:
                raise ValueError(f"non-stationary AR polynomial: ar={self.ar}")

    def to_dict(self) -> dict:
        return {
            "ar": list(self.ar),
            "ma": list(self.ma),
            "innovation_sd": self.innovation_sd,
            "burn_in": self.burn_in,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmaSpec":
        return cls(
            ar=tuple(d.get("ar", ())),
            ma=tuple(d.get("ma", ())),
            innovation_sd=float(d.get("innovation_sd", 1.0)),
            burn_in=int(d.get("burn_in", 0)),
        )


@dataclass(frozen=True)
class SeriesPair:
    """Aligned compositional outputs X_t in [0,1] and exogenous values W_t."""

    x: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if x.shape != w.shape or x.ndim != 1:
            raise ValueError("x and w must be 1-d arrays of equal length")
        if x.size and (x.min() < 0.0 or x.max() > 1.0):
            raise ValueError("all x values must lie in [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)

    def __len__(self) -> int:
        return self.x.size


def simulate_exogenous(spec: ArmaSpec, n: int, seed) -> np.ndarray:
    """Simulate n values of the ARMA process after discarding burn-in.

    The recursion starts from zero initial conditions; ``spec.burn_in``
    leading samples are dropped.  For ar=ma=() the output equals the raw
    innovation draws.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    total = spec.burn_in + n
    eps = rng.normal(0.0, spec.innovation_sd, size=total)
    if not spec.ar and not spec.ma:
        w = eps
    else:
        w = lfilter([1.0, *spec.ma], [1.0, *(-a for a in spec.ar)], eps)
    return w[spec.burn_in:]


def _continue_exogenous(spec: ArmaSpec, n: int, w_history: np.ndarray, seed) -> np.ndarray:
    """Extend an existing exogenous path by n steps under ``spec``.

    AR lags are taken from the tail of ``w_history``; the innovation history
    of the new regime starts empty (MA terms see only post-switch shocks).
    """
    rng = as_generator(seed)
    p, q = len(spec.ar), len(spec.ma)
    eps = rng.normal(0.0, spec.innovation_sd, size=n)
    w_lags = list(w_history[-p:][::-1]) if p else []
    e_lags = [0.0] * q
    out = np.empty(n)
    for t in range(n):
        val = eps[t]
        for i, a in enumerate(spec.ar):
            if i < len(w_lags):
                val += a * w_lags[i]
        for j, b in enumerate(spec.ma):
            val += b * e_lags[j]
        out[t] = val
        if p:
            w_lags = [val] + w_lags[: p - 1]
        if q:
            e_lags = [eps[t]] + e_lags[: q - 1]
    return out


def simulate_outputs(
    model: BetaARX,
    w: np.ndarray | None,
    n: int,
    seed,
    init_x=None,
    return_means: bool = False,
):
    """Simulate the Beta AR(p) recursion given an exogenous path.

    ``w`` must supply at least n + q values (q = 0 for a no-exogenous
    model); the first q entries serve as pre-sample lags and any surplus
    beyond n + q is consumed as burn-in whose draws are discarded.  The
    recursion is initialized at ``init_x`` (default: all 0.5, logit zero).
    Returns the final n draws with the aligned raw exogenous values; with
    ``return_means`` also the conditional means mu_t of those draws.
    """
    rng = as_generator(seed)
    p = model.p
    q_eff = 0 if model.psi is None else model.q
    if w is None:
        if model.psi is not None:
            raise ValueError("model has exogenous terms but no w was supplied")
        w = np.zeros(n)
    w = np.asarray(w, dtype=float)
    if w.size < n + q_eff:
        raise ValueError(f"need at least n + q = {n + q_eff} exogenous values, got {w.size}")
    steps = w.size - q_eff

    if init_x is None:
        hist = np.zeros(p)  # logit(0.5)
    else:
        init_x = np.asarray(init_x, dtype=float)
        if init_x.size != p or (p and (init_x.min() <= 0.0 or init_x.max() >= 1.0)):
            raise ValueError("init_x must hold p values strictly inside (0, 1)")
        hist = clamped_logit(init_x, model.x_clamp) if p else np.zeros(0)

    # Exogenous link contribution for every step, computed up front.
    if model.psi is None:
        exo = np.zeros(steps)
    else:
        wc = clamp(w, model.w_clamp)
        exo = np.zeros(steps)
        for j, coef in enumerate(model.psi):
            exo += coef * wc[q_eff - j : q_eff - j + steps]

    phi = np.asarray(model.phi)
    tau = model.tau
    lo, hi = model.x_clamp
    lo_l, hi_l = math.log(lo / (1 - lo)), math.log(hi / (1 - hi))
    tiny = np.nextafter(0.0, 1.0)
    one_minus = np.nextafter(1.0, 0.0)

    x_out = np.empty(steps)
    mu_out = np.empty(steps)
    for t in range(steps):
        eta = model.phi0 + exo[t]
        if p:
            eta += float(phi @ hist)
        mu = inverse_logit(eta)
        a, b = tau * mu, tau * (1.0 - mu)
        if not (a > 0.0 and b > 0.0):
            raise FloatingPointError(
                f"degenerate conditional mean at step {t}: mu={mu!r}"
            )
        draw = rng.beta(a, b)
        # Guard against float underflow to an exact boundary; the Beta law
        # itself puts no mass there.
        draw = min(max(draw, tiny), one_minus)
        x_out[t] = draw
        mu_out[t] = mu
        if p:
            hist[1:] = hist[:-1]
            hist[0] = min(max(math.log(draw / (1.0 - draw)), lo_l), hi_l)

    pair = SeriesPair(x=x_out[steps - n :], w=w[w.size - n :])
    if return_means:
        return pair, mu_out[steps - n :]
    return pair


def simulate_series(
    model: BetaARX,
    exog: ArmaSpec | None,
    n: int,
    seed: int,
    burn_in: int = 500,
) -> SeriesPair:
    """Generate a stationary-start series: exogenous path, then outputs.

    Uses two fixed substreams of ``seed`` (exogenous first), discards
    ``burn_in`` initial output draws so the recursion forgets its
    initialization.
    """
    q_eff = 0 if model.psi is None else model.q
    total_w = n + q_eff + burn_in
    if exog is None:
        w = np.zeros(total_w)
    else:
        w = simulate_exogenous(exog, total_w, substream(seed, STAGE_EXOG))
    return simulate_outputs(model, w, n, substream(seed, STAGE_OUTPUT))
