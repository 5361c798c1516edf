"""Quasi-likelihood ratio test between two non-nested link functions.

Both links are fit by QMLE on the same sample and the same weight
matrices; the test statistic is the difference of the fitted
quasi-loglikelihoods, standardized by the sample variability of the
per-replicate quadratic-form differences. The standardized statistic is
asymptotically standard normal when the two links explain the data
equally well, which yields a three-way decision: prefer the first link,
prefer the second, or call them equivalent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .estimate import QmleResult, fit_qmle
from .exceptions import DegenerateVarianceError, InputError
from .links import get_link
from .validation import check_samples
from .weights import WeightSet

__all__ = ["LrTestResult", "lr_test"]

_SIGMA_MIN = 1e-12


@dataclass(frozen=True)
class LrTestResult:
    """Outcome of the link comparison.

    Attributes
    ----------
    t_lr : float
        Difference loglik(link1 fit) - loglik(link2 fit).
    z : float
        Standardized statistic 2 (np)^{-1/2} t_lr / sigma_hat.
    sigma_hat : float
        Sample standard deviation (n-1 denominator) of the per-replicate
        quadratic-form differences p^{-1/2} y_i' (S1^{-1} - S2^{-1}) y_i.
    alpha : float
    z_alpha : float
        Upper-alpha standard normal quantile.
    decision : {"prefer_link1", "prefer_link2", "equivalent"}
    link1, link2 : str
    fit1, fit2 : QmleResult
    """

    t_lr: float
    z: float
    sigma_hat: float
    alpha: float
    z_alpha: float
    decision: str
    link1: str
    link2: str
    fit1: QmleResult
    fit2: QmleResult
    n: int
    p: int

    @property
    def klic_gap(self) -> float:
        """Descriptive per-entry loglikelihood gap t_lr / (np)."""
        return self.t_lr / (self.n * self.p)


def lr_test(
    y,
    weights,
    link1,
    link2,
    alpha: float = 0.05,
    fit1: QmleResult | None = None,
    fit2: QmleResult | None = None,
    **fit_kwargs,
) -> LrTestResult:
    """Compare two link functions on replicated observations.

    Parameters
    ----------
    y : ndarray of shape (n, p) with n >= 2
        Replicated observations; the variance of the statistic is
        estimated across them.
    weights : WeightSet or iterable of weight matrices
    link1, link2 : str or LinkMap
        Distinct links to compare.
    alpha : float in (0, 1)
        Level of the normal decision thresholds +-z_alpha.
    fit1, fit2 : QmleResult, optional
        Precomputed fits under the two links (for reuse across repeated
        comparisons); must have been obtained on the same y and weights.
    **fit_kwargs
        Forwarded to :func:`fit_qmle` for any fit not supplied.

    Raises
    ------
    DegenerateVarianceError
        When the per-replicate quadratic-form differences have standard
        deviation below 1e-12, e.g. because both fitted covariances
        coincide.
    """
    ws = weights if isinstance(weights, WeightSet) else WeightSet.from_matrices(weights)
    y = check_samples(y, p=ws.p)
    n, p = y.shape
    if n < 2:
        raise InputError("the link test needs n >= 2 replicated observations")
    l1 = get_link(link1)
    l2 = get_link(link2)
    if l1.name == l2.name:
        raise InputError("link1 and link2 must differ")
    if not 0.0 < alpha < 1.0:
        raise InputError("alpha must lie strictly between 0 and 1")

    if fit1 is None:
        fit1 = fit_qmle(y, ws, l1, vcov=False, **fit_kwargs)
    if fit2 is None:
        fit2 = fit_qmle(y, ws, l2, vcov=False, **fit_kwargs)

    t_lr = fit1.loglik - fit2.loglik
    q = (fit1.state.quad_forms(y) - fit2.state.quad_forms(y)) / np.sqrt(p)
    sigma_hat = float(np.std(q, ddof=1))
    if sigma_hat < _SIGMA_MIN:
        raise DegenerateVarianceError(
            "the two fitted covariances give identical quadratic forms; "
            "the comparison is degenerate"
        )
    z = 2.0 * t_lr / (sigma_hat * np.sqrt(n * p))
    z_alpha = float(norm.isf(alpha))
    if z > z_alpha:
        decision = "prefer_link1"
    elif z < -z_alpha:
        decision = "prefer_link2"
    else:
        decision = "equivalent"
    return LrTestResult(
        t_lr=float(t_lr),
        z=float(z),
        sigma_hat=sigma_hat,
        alpha=alpha,
        z_alpha=z_alpha,
        decision=decision,
        link1=l1.name,
        link2=l2.name,
        fit1=fit1,
        fit2=fit2,
        n=n,
        p=p,
    )
