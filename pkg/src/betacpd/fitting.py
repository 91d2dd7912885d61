"""Conditional maximum-likelihood fitting of the Beta ARX model.

The conditional log-likelihood holds the first max(p, q) observations
fixed and sums Beta log-densities with mean mu_t from the logit-linear
recursion and dispersion tau.  Optimization runs on (phi0, phi, psi,
log tau) with the analytic gradient under L-BFGS-B, falling back to
Nelder-Mead; starting values come from a least-squares fit on the logit
scale with a method-of-moments dispersion.

Also provides the AIC/MAE model-selection sweep over (p, q) and the
year/month detrending regression used by the real-data pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, expit, gammaln

from .model import (
    DEFAULT_W_CLAMP,
    DEFAULT_X_CLAMP,
    BetaARX,
    SeriesPair,
    clamp,
    clamped_logit,
)

__all__ = [
    "FitResult",
    "SweepResult",
    "DetrendModel",
    "negative_loglik",
    "negative_loglik_gradient",
    "fit",
    "fitted_means",
    "hessian_standard_errors",
    "model_selection_sweep",
    "select_min_aic",
    "detrend",
]

_REJECT = float("inf")


def _design(data: SeriesPair, p: int, q: int | None, x_clamp, w_clamp):
    """Response (clamped) and regressor matrix for the conditional likelihood.

    Rows cover t = l0 .. n-1 with l0 = max(p, q); columns are the intercept,
    p clamped-logit output lags, then exogenous lags 0..q (absent when q is
    None).
    """
    x = np.asarray(data.x, dtype=float)
    w = np.asarray(data.w, dtype=float)
    n = x.size
    q_eff = 0 if q is None else q
    l0 = max(p, q_eff)
    if n <= l0 + 1:
        raise ValueError(f"need more than max(p, q) + 1 = {l0 + 1} observations, got {n}")
    y = clamp(x, x_clamp)
    g = clamped_logit(x, x_clamp)
    cols = [np.ones(n - l0)]
    for i in range(1, p + 1):
        cols.append(g[l0 - i : n - i])
    if q is not None:
        wc = clamp(w, w_clamp)
        for j in range(q + 1):
            cols.append(wc[l0 - j : n - j])
    return y[l0:], np.column_stack(cols), l0


def _nll_terms(theta, y_resp, reg, logy, log1my):
    """Negative log-likelihood and gradient in (coefficients, log tau).

    Returns (+inf, zeros) for parameter points with a degenerate
    conditional mean, which optimizers treat as a rejection.
    """
    beta = theta[:-1]
    tau = math.exp(theta[-1])
    eta = reg @ beta
    mu = expit(eta)
    a = tau * mu
    b = tau * (1.0 - mu)
    if not (np.all(np.isfinite(eta)) and a.min() > 0.0 and b.min() > 0.0):
        return _REJECT, np.zeros_like(theta)
    ll = gammaln(tau) - gammaln(a) - gammaln(b) + (a - 1.0) * logy + (b - 1.0) * log1my
    nll = -float(ll.sum())
    if not math.isfinite(nll):
        return _REJECT, np.zeros_like(theta)
    ystar = logy - log1my
    mustar = digamma(a) - digamma(b)
    deta = tau * mu * (1.0 - mu) * (ystar - mustar)
    grad_beta = -(reg.T @ deta)
    dtau = digamma(tau) - mu * digamma(a) - (1.0 - mu) * digamma(b) + mu * logy + (1.0 - mu) * log1my
    grad_logtau = -tau * float(dtau.sum())
    return nll, np.append(grad_beta, grad_logtau)


def _theta_from_model(model: BetaARX) -> np.ndarray:
    coefs = [model.phi0, *model.phi]
    if model.psi is not None:
        coefs.extend(model.psi)
    return np.array([*coefs, math.log(model.tau)])


def negative_loglik(model: BetaARX, data: SeriesPair) -> float:
    """Conditional negative log-likelihood of the data under ``model``.

    Observations are clamped to the model's output clamp before density
    evaluation; the first max(p, q) values condition the recursion.
    Returns +inf when the conditional mean degenerates.
    """
    y, reg, _ = _design(data, model.p, model.q, model.x_clamp, model.w_clamp)
    logy, log1my = np.log(y), np.log1p(-y)
    nll, _ = _nll_terms(_theta_from_model(model), y, reg, logy, log1my)
    return nll


def negative_loglik_gradient(model: BetaARX, data: SeriesPair) -> np.ndarray:
    """Analytic gradient of the negative log-likelihood.

    Ordered as (phi0, phi_1..p, psi_0..q, tau); the tau component is in the
    natural (not log) parameterization.
    """
    y, reg, _ = _design(data, model.p, model.q, model.x_clamp, model.w_clamp)
    logy, log1my = np.log(y), np.log1p(-y)
    theta = _theta_from_model(model)
    nll, grad = _nll_terms(theta, y, reg, logy, log1my)
    if not math.isfinite(nll):
        raise FloatingPointError("gradient undefined: degenerate conditional mean")
    grad = grad.copy()
    grad[-1] = grad[-1] / model.tau
    return grad


@dataclass(frozen=True)
class FitResult:
    """Fitted model with likelihood-based fit metrics."""

    model: BetaARX
    loglik: float
    aic: float
    mae: float
    converged: bool
    iterations: int
    n_used: int

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "p": self.model.p,
            "q": self.model.q,
            "loglik": self.loglik,
            "aic": self.aic,
            "mae": self.mae,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_used": self.n_used,
        }


def aic_of(loglik: float, p: int, q: int | None) -> float:
    """-2 loglik + 2 k with k = phi0, p AR terms, q+1 exogenous terms, tau."""
    k = p + 2 + (0 if q is None else q + 1)
    return -2.0 * loglik + 2.0 * k


def fitted_means(model: BetaARX, data: SeriesPair) -> np.ndarray:
    """Conditional means mu_t over the fitted range t = max(p, q) .. n-1."""
    _, reg, _ = _design(data, model.p, model.q, model.x_clamp, model.w_clamp)
    coefs = [model.phi0, *model.phi]
    if model.psi is not None:
        coefs.extend(model.psi)
    return expit(reg @ np.asarray(coefs))


def _start_values(y, reg):
    ylogit = np.log(y / (1.0 - y))
    beta0, *_ = np.linalg.lstsq(reg, ylogit, rcond=None)
    mu0 = expit(reg @ beta0)
    resid_var = float(np.mean((y - mu0) ** 2))
    if resid_var <= 0.0:
        tau0 = 100.0
    else:
        tau0 = float(np.mean(mu0 * (1.0 - mu0)) / resid_var - 1.0)
    tau0 = min(max(tau0, 0.5), 1e5)
    return np.append(beta0, math.log(tau0))


def fit(
    data: SeriesPair,
    p: int,
    q: int | None,
    x_clamp=DEFAULT_X_CLAMP,
    w_clamp=DEFAULT_W_CLAMP,
    maxiter: int = 500,
    ftol: float = 1e-9,
) -> FitResult:
    """Conditional MLE of a Beta ARX(p, q) model.

    ``q=None`` fits a model with no exogenous term; ``q=0`` still includes
    the contemporaneous exogenous value.  Non-convergence is reported via
    the ``converged`` flag rather than raised.  The returned likelihood is
    never worse than the starting point's.
    """
    q_eff = 0 if q is None else q
    hard_min = max(p, q_eff) + p + q_eff + 4
    if len(data) < hard_min:
        raise ValueError(f"need at least {hard_min} observations to fit (p={p}, q={q}), got {len(data)}")
    y, reg, l0 = _design(data, p, q, x_clamp, w_clamp)
    if np.ptp(y) == 0.0:
        raise ValueError("constant series: the dispersion is unidentifiable")
    logy, log1my = np.log(y), np.log1p(-y)

    def objective(theta):
        return _nll_terms(theta, y, reg, logy, log1my)

    theta0 = _start_values(y, reg)
    nll0, _ = objective(theta0)
    bounds = [(None, None)] * (theta0.size - 1) + [(-10.0, 20.0)]
    res = minimize(
        objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": maxiter, "ftol": ftol},
    )
    theta, nll, n_iter, converged = res.x, float(res.fun), int(res.nit), bool(res.success)
    if not converged:
        fallback = minimize(
            lambda t: objective(t)[0],
            theta if math.isfinite(nll) else theta0,
            method="Nelder-Mead",
            options={"maxiter": 4 * maxiter, "fatol": 1e-10, "xatol": 1e-8},
        )
        if float(fallback.fun) < nll:
            theta, nll = fallback.x, float(fallback.fun)
            converged = bool(fallback.success)
            n_iter += int(fallback.nit)
    if nll > nll0:
        theta, nll, converged = theta0, nll0, False

    n_coef = 1 + p + (0 if q is None else q + 1)
    phi0 = float(theta[0])
    phi = tuple(theta[1 : 1 + p])
    psi = None if q is None else tuple(theta[1 + p : n_coef])
    model = BetaARX(
        phi0=phi0, phi=phi, psi=psi, tau=math.exp(theta[-1]),
        x_clamp=tuple(x_clamp), w_clamp=tuple(w_clamp),
    )
    loglik = -nll
    mu = fitted_means(model, data)
    mae = float(np.mean(np.abs(y - mu)))
    return FitResult(
        model=model,
        loglik=loglik,
        aic=aic_of(loglik, p, q),
        mae=mae,
        converged=converged,
        iterations=n_iter,
        n_used=y.size,
    )


def hessian_standard_errors(model: BetaARX, data: SeriesPair):
    """Numerical-Hessian covariance of the MLE in natural parameters.

    Central finite differences of the analytic gradient at ``model``'s
    parameter point, ordered (phi0, phi, psi, tau).  Returns (se, cov).
    """
    base = np.array(
        [model.phi0, *model.phi, *(model.psi or ()), model.tau]
    )
    x_clamp, w_clamp, p, q = model.x_clamp, model.w_clamp, model.p, model.q

    def grad_at(vec):
        m = BetaARX(
            phi0=vec[0],
            phi=tuple(vec[1 : 1 + p]),
            psi=None if q is None else tuple(vec[1 + p : -1]),
            tau=vec[-1],
            x_clamp=x_clamp,
            w_clamp=w_clamp,
        )
        return negative_loglik_gradient(m, data)

    n_par = base.size
    hess = np.empty((n_par, n_par))
    eps = np.finfo(float).eps ** (1.0 / 3.0)
    for j in range(n_par):
        h = eps * max(1.0, abs(base[j]))
        up, dn = base.copy(), base.copy()
        up[j] += h
        dn[j] -= h
        hess[:, j] = (grad_at(up) - grad_at(dn)) / (2.0 * h)
    hess = 0.5 * (hess + hess.T)
    cov = np.linalg.inv(hess)
    diag = np.diag(cov)
    se = np.sqrt(np.where(diag > 0, diag, np.nan))
    return se, cov


@dataclass(frozen=True)
class SweepResult:
    """Model-selection sweep output: one cell per (p, q) pair."""

    results: dict
    errors: dict
    best: tuple | None

    def to_csv(self) -> str:
        lines = ["p,q,aic,mae,loglik,converged"]
        for (p, q), r in sorted(self.results.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1])):
            qtxt = "none" if q is None else q
            lines.append(f"{p},{qtxt},{r.aic!r},{r.mae!r},{r.loglik!r},{int(r.converged)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "cells": [
                {"p": p, "q": q, **r.to_dict()} for (p, q), r in self.results.items()
            ],
            "errors": [{"p": p, "q": q, "error": e} for (p, q), e in self.errors.items()],
            "best": None if self.best is None else list(self.best),
        }


def select_min_aic(results: dict) -> tuple | None:
    """Key of the minimum-AIC cell; ties broken by fewer parameters."""
    if not results:
        return None
    def order(item):
        (p, q), r = item
        q_eff = -1 if q is None else q
        return (r.aic, p + (q_eff + 1), p, q_eff)
    return min(results.items(), key=order)[0]


def model_selection_sweep(
    data: SeriesPair,
    p_range,
    q_range,
    include_no_exog: bool = False,
    **fit_kwargs,
) -> SweepResult:
    """Fit every (p, q) cell and locate the minimum-AIC model.

    Per-cell failures are recorded and the sweep continues.  With
    ``include_no_exog`` each p additionally gets a q=None cell (no
    exogenous variable), which is distinct from q=0.
    """
    p_range = list(p_range)
    q_values = list(q_range)
    if not p_range or not q_values:
        raise ValueError("p_range and q_range must be nonempty")
    if include_no_exog:
        q_values = [None] + q_values
    results, errors = {}, {}
    for p in p_range:
        for q in q_values:
            try:
                results[(p, q)] = fit(data, p, q, **fit_kwargs)
            except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
                errors[(p, q)] = str(exc)
    return SweepResult(results=results, errors=errors, best=select_min_aic(results))


@dataclass(frozen=True)
class DetrendModel:
    """Year/month regression for seasonality and trend adjustment.

    Month effects are identified with December as the baseline;
    ``month_effects[j]`` is the effect of month j+1 (January..November).
    ``offset`` is the constant added back to the residuals so the adjusted
    series can be recentered, e.g. at the training mean.
    """

    intercept: float
    year_coef: float
    month_effects: tuple
    offset: float = 0.0

    def fitted(self, years, months) -> np.ndarray:
        years = np.asarray(years, dtype=float)
        months = np.asarray(months, dtype=int)
        effects = np.append(np.asarray(self.month_effects), 0.0)
        return self.intercept + self.year_coef * years + effects[months - 1]

    def adjust(self, values, years, months) -> np.ndarray:
        return np.asarray(values, dtype=float) - self.fitted(years, months) + self.offset

    def retrend(self, adjusted, years, months) -> np.ndarray:
        return np.asarray(adjusted, dtype=float) - self.offset + self.fitted(years, months)

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "year_coef": self.year_coef,
            "month_effects": list(self.month_effects),
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetrendModel":
        return cls(
            intercept=float(d["intercept"]),
            year_coef=float(d["year_coef"]),
            month_effects=tuple(d["month_effects"]),
            offset=float(d.get("offset", 0.0)),
        )


def detrend(values, years, months, offset: float = 0.0):
    """Least-squares seasonality and trend removal.

    Regresses ``values`` on a linear year term and eleven month dummies
    (December baseline) and returns (DetrendModel, adjusted) with
    adjusted = values - fitted + offset.  Retrending restores the original
    series exactly.  A rank-deficient design (e.g. a single year of data
    with missing months) is rejected.
    """
    values = np.asarray(values, dtype=float)
    years = np.asarray(years, dtype=float)
    months = np.asarray(months, dtype=int)
    if not (values.size == years.size == months.size):
        raise ValueError("values, years, months must have equal lengths")
    if months.min() < 1 or months.max() > 12:
        raise ValueError("months must lie in 1..12")
    n = values.size
    design = np.zeros((n, 13))
    design[:, 0] = 1.0
    design[:, 1] = years
    for j in range(11):
        design[:, 2 + j] = months == (j + 1)
    rank = np.linalg.matrix_rank(design)
    if rank < 13:
        raise ValueError(
            f"rank-deficient detrending design (rank {rank} < 13): "
            "need variation in year and all twelve months represented"
        )
    coefs, *_ = np.linalg.lstsq(design, values, rcond=None)
    dm = DetrendModel(
        intercept=float(coefs[0]),
        year_coef=float(coefs[1]),
        month_effects=tuple(float(c) for c in coefs[2:]),
        offset=float(offset),
    )
    return dm, dm.adjust(values, years, months)
