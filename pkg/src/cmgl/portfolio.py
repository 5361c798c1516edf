"""Minimum-variance portfolio backtest driven by fitted covariance models.

Each period's cross-section of returns is treated as one observation of
the covariance model: weight matrices are built from that period's
(already lagged) covariates by a thresholded Gaussian kernel, the model is
fit with n = 1, the minimum-variance weights are computed from the fitted
covariance, and the portfolio is held for one period. The report collects
per-period weights, realized returns, and the out-of-sample mean, standard
deviation and Sharpe ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .estimate import fit_ols, fit_qmle
from .exceptions import (
    CmglError,
    DegenerateVarianceError,
    FitFailedError,
    InputError,
    NotPositiveDefiniteError,
)
from .links import get_link
from .select import backward_select
from .weights import WeightSet, build_thresholded

__all__ = [
    "ReturnsPanel",
    "CovariatePanel",
    "PortfolioReport",
    "minvar_weights",
    "build_month_weights",
    "backtest",
]

# Relative eigenvalue floor used when projecting an indefinite fitted
# covariance onto the positive definite cone.
_PD_FLOOR = 1e-6


@dataclass(frozen=True)
class ReturnsPanel:
    """T periods of returns on p assets, oldest first."""

    returns: np.ndarray
    dates: tuple = ()
    assets: tuple = ()

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        if r.ndim != 2 or r.shape[0] < 2 or r.shape[1] < 2:
            raise InputError("returns must be a T x p matrix with T >= 2, p >= 2")
        if not np.all(np.isfinite(r)):
            raise InputError("returns have non-finite entries")
        object.__setattr__(self, "returns", r)
        dates = tuple(str(d) for d in self.dates) or tuple(
            str(i) for i in range(r.shape[0])
        )
        assets = tuple(str(a) for a in self.assets) or tuple(
            f"a{j}" for j in range(r.shape[1])
        )
        if len(dates) != r.shape[0]:
            raise InputError("dates must match the number of periods")
        if len(assets) != r.shape[1]:
            raise InputError("asset ids must match the number of columns")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", assets)

    @property
    def t(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]


@dataclass(frozen=True)
class CovariatePanel:
    """Per-period p x K covariate matrices, already lagged.

    The matrix at index i must contain the covariates used to model
    period i's returns (i.e. observed one period earlier). The panel may
    omit the final period, which no fit ever uses.
    """

    values: np.ndarray
    names: tuple = ()
    dates: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] < 1 or v.shape[1] < 2 or v.shape[2] < 1:
            raise InputError("covariates must have shape (T, p, K)")
        if not np.all(np.isfinite(v)):
            raise InputError("covariates have non-finite entries")
        object.__setattr__(self, "values", v)
        names = tuple(str(x) for x in self.names) or tuple(
            f"x{k}" for k in range(v.shape[2])
        )
        if len(names) != v.shape[2]:
            raise InputError("covariate names must match K")
        object.__setattr__(self, "names", names)
        dates = tuple(str(d) for d in self.dates) or tuple(
            str(i) for i in range(v.shape[0])
        )
        if len(dates) != v.shape[0]:
            raise InputError("dates must match the number of periods")
        object.__setattr__(self, "dates", dates)

    @property
    def k(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PortfolioReport:
    """Backtest outcome over T - 1 out-of-sample periods."""

    weights: np.ndarray
    realized: np.ndarray
    fit_dates: tuple
    mean: float
    sd: float
    sharpe: float
    rf: np.ndarray
    link: str
    estimator: str
    selected_supports: tuple = ()


def minvar_weights(sigma_hat) -> np.ndarray:
    """Fully-invested weights minimizing the portfolio variance.

    The closed form is Sigma^{-1} 1 / (1' Sigma^{-1} 1). Requires a
    positive definite covariance; callers holding an indefinite estimate
    must project or refit first.
    """
    sigma = np.asarray(sigma_hat, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] < 2:
        raise InputError("sigma_hat must be a square matrix with p >= 2")
    if not np.all(np.isfinite(sigma)):
        raise InputError("sigma_hat has non-finite entries")
    try:
        factor = scipy.linalg.cho_factor((sigma + sigma.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "sigma_hat is not positive definite"
        ) from exc
    ones = np.ones(sigma.shape[0])
    w = scipy.linalg.cho_solve(factor, ones)
    return w / np.sum(w)


def build_month_weights(
    covariates, scale: float = 10.0, target_density: float = 0.10
) -> WeightSet:
    """Kernel weight matrices from one period's p x K covariate matrix.

    Each column yields one matrix: pairwise absolute differences are
    thresholded so a ``target_density`` fraction of off-diagonal entries
    is kept, and surviving entries get exp(-scale * difference^2).
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise InputError("covariates must be a p x K matrix")
    if not np.all(np.isfinite(x)):
        raise InputError("covariates have non-finite entries")
    mats = []
    for k in range(x.shape[1]):
        dist = np.abs(x[:, k, None] - x[None, :, k])
        mats.append(build_thresholded(dist, target_density=target_density, scale=scale))
    return WeightSet.from_matrices(mats, p=x.shape[0])


def _pd_project(sigma: np.ndarray) -> np.ndarray:
    """Floor the spectrum at a small fraction of the top eigenvalue."""
    lam, u = np.linalg.eigh((sigma + sigma.T) / 2.0)
    if not lam[-1] > 0:
        raise NotPositiveDefiniteError(
            "fitted covariance has no positive eigenvalue"
        )
    lam = np.maximum(lam, _PD_FLOOR * lam[-1])
    return (u * lam) @ u.T


def _fit_period(y_row, ws, link, estimator, select, gamma):
    """Fitted covariance for one period's cross-section (n = 1)."""
    if select:
        res = backward_select(y_row, ws, link=link, estimator=estimator, gamma=gamma)
        if not res.converged:
            raise FitFailedError("selection refit did not converge")
        if estimator == "qmle":
            return res.fit.state.sigma(), res.support
        return ws.combine(res.beta), res.support
    if estimator == "qmle":
        fit = fit_qmle(y_row, ws, link, vcov=False)
        if not fit.converged:
            raise FitFailedError("fit did not converge")
        return fit.state.sigma(), None
    fit = fit_ols(y_row, ws, vcov=False)
    return ws.combine(fit.beta), None


def backtest(
    returns,
    covariates,
    link="identity",
    estimator: str = "qmle",
    select: bool = False,
    gamma: float = 0.5,
    rf=0.0,
    scale: float = 10.0,
    target_density: float = 0.10,
    demean: bool = True,
) -> PortfolioReport:
    """Rolling one-period-ahead minimum-variance backtest.

    For each period i < T the covariance model is fit on that period's
    cross-section alone (n = 1) with weight matrices built from the
    period's lagged covariates; the resulting minimum-variance weights
    are applied to period i + 1's returns. An indefinite fitted
    covariance (possible under the least-squares estimator) is projected
    onto the positive definite cone before inverting.

    Parameters
    ----------
    returns : ReturnsPanel or (T, p) array
    covariates : CovariatePanel or (T, p, K) array
        Period i's matrix must hold covariates observed before period i;
        a panel of length T - 1 (omitting the unused last period) is
        accepted.
    rf : float or array of length T - 1
        Per-period risk-free rate used for the Sharpe ratio.
    demean : bool
        Remove each fitting period's cross-sectional mean before the
        fit (the model assumes mean-zero observations). Realized returns
        are always computed from raw next-period returns.

    Raises
    ------
    FitFailedError
        Tagged with the period whose fit failed.
    DegenerateVarianceError
        When realized returns have zero variance and the Sharpe ratio is
        undefined.
    """
    panel = returns if isinstance(returns, ReturnsPanel) else ReturnsPanel(returns)
    cov = (
        covariates
        if isinstance(covariates, CovariatePanel)
        else CovariatePanel(covariates)
    )
    if cov.values.shape[1] != panel.p:
        raise InputError("covariates and returns disagree on p")
    if cov.values.shape[0] < panel.t - 1:
        raise InputError("covariate panel must cover the first T - 1 periods")
    if estimator not in ("qmle", "ols"):
        raise InputError("estimator must be 'qmle' or 'ols'")
    link = get_link(link)
    if estimator == "ols" and link.name != "identity":
        raise InputError("the least-squares estimator requires the identity link")
    n_out = panel.t - 1
    if n_out < 2:
        raise InputError(
            "a backtest needs T >= 3 periods so the realized returns have "
            "a sample standard deviation"
        )
    rf_arr = np.asarray(rf, dtype=float)
    if rf_arr.ndim == 0:
        rf_arr = np.full(n_out, float(rf_arr))
    if rf_arr.shape != (n_out,) or not np.all(np.isfinite(rf_arr)):
        raise InputError("rf must be a finite scalar or a series of length T - 1")

    weights = np.empty((n_out, panel.p))
    realized = np.empty(n_out)
    supports = []
    for i in range(n_out):
        y = panel.returns[i]
        if demean:
            y = y - y.mean()
        try:
            ws = build_month_weights(
                cov.values[i], scale=scale, target_density=target_density
            )
            sigma_hat, support = _fit_period(y, ws, link, estimator, select, gamma)
            try:
                w = minvar_weights(sigma_hat)
            except NotPositiveDefiniteError:
                w = minvar_weights(_pd_project(sigma_hat))
        except CmglError as exc:
            raise FitFailedError(
                f"period {panel.dates[i]}: {exc}"
            ) from exc
        weights[i] = w
        realized[i] = float(w @ panel.returns[i + 1])
        supports.append(support)

    mean = float(np.mean(realized))
    sd = float(np.std(realized, ddof=1))
    if sd < 1e-15:
        raise DegenerateVarianceError(
            "realized returns are constant; the Sharpe ratio is undefined"
        )
    sharpe = (mean - float(np.mean(rf_arr))) / sd
    return PortfolioReport(
        weights=weights,
        realized=realized,
        fit_dates=panel.dates[:-1],
        mean=mean,
        sd=sd,
        sharpe=float(sharpe),
        rf=rf_arr,
        link=link.name,
        estimator=estimator,
        selected_supports=tuple(supports) if select else (),
    )
