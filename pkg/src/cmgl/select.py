"""Subset selection of weight matrices by the extended BIC.

A candidate model is a subset of the weight-matrix indices {1, ..., K};
the intercept term beta_0 belongs to every model. Submodels are scored by
an EBIC criterion whose model-space penalty 2 v(s) gamma log K guards
against spurious discoveries when K grows with p, and the search is the
classical backward elimination, which reduces the 2^K scan to O(K^2)
refits. An exhaustive scan is also provided for small K, both as a
reference and for validating the greedy path.

Throughout, v(s) counts the selected weight matrices, intercept excluded;
since the intercept is common to all models its penalty contribution
would cancel in every comparison anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimate import fit_ols, fit_qmle, ols_variance, qmle_variance
from .exceptions import CmglError, InfeasibleStartError, InputError
from .links import get_link
from .validation import check_samples
from .weights import WeightSet

__all__ = [
    "SelectionResult",
    "ebic_qmle_value",
    "ebic_ols_value",
    "ebic_q",
    "ebic_ols",
    "backward_select",
    "exhaustive_select",
]

# Floor keeping log sigma2 finite for (near-)saturated fits.
_SIGMA2_FLOOR = 1e-30

# 2^K subsets make exhaustive scans unreasonable past this point.
_EXHAUSTIVE_K_MAX = 20


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of a subset search.

    Attributes
    ----------
    support : tuple of int
        Sorted chosen indices; always starts with 0 (the intercept).
    beta : ndarray of shape (K + 1,)
        Refit coefficients embedded in the full model, zeros off-support.
    ebic : float
        Criterion value of the chosen subset.
    estimator : {"qmle", "ols"}
    link : str
    gamma : float
    trace : tuple of (support, ebic) pairs
        Every subset visited, in evaluation order.
    fit : QmleResult or OlsResult or None
        Final refit on the chosen subset; None if nothing was fittable.
    converged : bool
    """

    support: tuple
    beta: np.ndarray
    ebic: float
    estimator: str
    link: str
    gamma: float
    trace: tuple
    fit: object
    converged: bool

    @property
    def n_selected(self) -> int:
        """v(s): number of selected weight matrices, intercept excluded."""
        return len(self.support) - 1


def ebic_qmle_value(
    loglik: float, n_active: int, p: int, k_total: int, gamma: float
) -> float:
    """EBIC of a quasi-likelihood fit: -2 loglik + v log p + 2 v gamma log K."""
    penalty = n_active * math.log(p)
    if n_active > 0:
        penalty += 2.0 * n_active * gamma * math.log(k_total)
    return -2.0 * loglik + penalty


def ebic_ols_value(
    sigma2: float, n_active: int, p: int, k_total: int, gamma: float
) -> float:
    """EBIC of a least-squares fit, on the log residual-variance scale.

    The fit term is log of the mean squared Frobenius residual (floored
    at 1e-30 to keep saturated fits finite); the penalties carry a 1/p^2
    factor because the effective regression has p^2 responses.
    """
    pen = n_active * math.log(p) / p**2
    if n_active > 0:
        pen += 2.0 * n_active * gamma * math.log(k_total) / p**2
    return math.log(max(sigma2, _SIGMA2_FLOOR)) + pen


def _clean_subset(subset, k_total: int) -> tuple:
    s = sorted(set(int(i) for i in subset) - {0})
    if any(not 1 <= i <= k_total for i in s):
        raise InputError(f"subset indices must lie in 1..{k_total}")
    return tuple(s)


def _with_intercept(subset) -> tuple:
    return (0,) + tuple(subset)


def _embed(beta_sub: np.ndarray, subset, k_total: int) -> np.ndarray:
    beta = np.zeros(k_total + 1)
    beta[0] = beta_sub[0]
    beta[list(subset)] = beta_sub[1:]
    return beta


class _QmleScorer:
    """Scores subsets by refitting the QMLE, with warm starts."""

    def __init__(self, y, ws, link, gamma, fit_kwargs):
        self.y = y
        self.ws = ws
        self.link = link
        self.gamma = gamma
        self.fit_kwargs = fit_kwargs

    def score(self, subset, warm_full=None):
        sub_ws = self.ws.subset(subset)
        kwargs = dict(self.fit_kwargs, vcov=False)
        beta_init = None
        if warm_full is not None:
            beta_init = np.concatenate(
                ([warm_full[0]], warm_full[list(subset)])
            )
        try:
            fit = fit_qmle(
                self.y, sub_ws, self.link, beta_init=beta_init, **kwargs
            )
        except InfeasibleStartError:
            fit = fit_qmle(self.y, sub_ws, self.link, **kwargs)
        beta_full = _embed(fit.beta, subset, self.ws.k)
        if not fit.converged:
            return math.inf, fit, beta_full, False
        value = ebic_qmle_value(
            fit.loglik, len(subset), self.ws.p, self.ws.k, self.gamma
        )
        return value, fit, beta_full, True


class _OlsScorer:
    """Scores subsets by the closed-form identity-link fit."""

    def __init__(self, y, ws, gamma):
        self.y = y
        self.ws = ws
        self.gamma = gamma
        n = y.shape[0]
        self.s = (y.T @ y) / n

    def sigma2(self, beta_full) -> float:
        resid = self.s - self.ws.combine(beta_full)
        p = self.ws.p
        return float(np.sum(resid * resid)) / p**2

    def score(self, subset, warm_full=None):
        fit = fit_ols(self.y, self.ws.subset(subset), vcov=False)
        beta_full = _embed(fit.beta, subset, self.ws.k)
        value = ebic_ols_value(
            self.sigma2(beta_full), len(subset), self.ws.p, self.ws.k, self.gamma
        )
        return value, fit, beta_full, True


def _fill_variance(fit, y, ws, subset, estimator) -> None:
    """Attach plug-in sds to the winning refit; silently skip on failure.

    The search itself scores point estimates only, so only the chosen
    subset pays for a variance pass.
    """
    if fit is None or fit.vcov is not None:
        return
    if estimator == "qmle" and not fit.converged:
        return
    sub_ws = ws.subset(subset)
    try:
        if estimator == "qmle":
            ve = qmle_variance(fit, y, sub_ws)
        else:
            ve = ols_variance(fit, y, sub_ws)
    except CmglError:
        return
    fit.vcov, fit.sd, fit.mu4 = ve.vcov, ve.sd, ve.mu4


def _make_scorer(y, ws, link, estimator, gamma, fit_kwargs):
    link = get_link(link)
    if estimator == "qmle":
        return _QmleScorer(y, ws, link, gamma, fit_kwargs)
    if estimator == "ols":
        if link.name != "identity":
            raise InputError("the least-squares estimator requires the identity link")
        if fit_kwargs:
            raise InputError("fit options do not apply to the closed-form estimator")
        return _OlsScorer(y, ws, gamma)
    raise InputError(f"unknown estimator {estimator!r}; use 'qmle' or 'ols'")


def ebic_q(y, weights, link, subset, gamma: float = 0.5, **fit_kwargs) -> float:
    """EBIC of the quasi-likelihood refit on one subset.

    ``subset`` lists the active weight-matrix indices (0 may be included
    and is ignored; the intercept is always active). Fit errors
    propagate; a refit that exhausts its iteration budget scores +inf.
    """
    ws = weights if isinstance(weights, WeightSet) else WeightSet.from_matrices(weights)
    y = check_samples(y, p=ws.p)
    if not gamma >= 0:
        raise InputError("gamma must be nonnegative")
    s = _clean_subset(subset, ws.k)
    value, _, _, _ = _QmleScorer(y, ws, get_link(link), gamma, fit_kwargs).score(s)
    return value


def ebic_ols(y, weights, subset, gamma: float = 0.5) -> float:
    """EBIC of the least-squares refit on one subset (identity link)."""
    ws = weights if isinstance(weights, WeightSet) else WeightSet.from_matrices(weights)
    y = check_samples(y, p=ws.p)
    if not gamma >= 0:
        raise InputError("gamma must be nonnegative")
    s = _clean_subset(subset, ws.k)
    value, _, _, _ = _OlsScorer(y, ws, gamma).score(s)
    return value


def backward_select(
    y,
    weights,
    link="identity",
    estimator: str = "qmle",
    gamma: float = 0.5,
    **fit_kwargs,
) -> SelectionResult:
    """Greedy backward elimination over weight-matrix subsets.

    Starts from the full model and repeatedly removes the single weight
    matrix whose removal lowers the EBIC the most, stopping when no
    removal improves the score. Submodels that fail to fit (or to
    converge) score +inf and are thereby skipped; ties between removals
    are broken toward the largest index. The intercept is never a
    removal candidate.

    Returns
    -------
    SelectionResult
        The chosen subset attains the minimum EBIC among all visited
        subsets.
    """
    ws = weights if isinstance(weights, WeightSet) else WeightSet.from_matrices(weights)
    y = check_samples(y, p=ws.p)
    if not gamma >= 0:
        raise InputError("gamma must be nonnegative")
    scorer = _make_scorer(y, ws, link, estimator, gamma, fit_kwargs)

    current = tuple(range(1, ws.k + 1))
    try:
        value, fit, beta_full, converged = scorer.score(current)
    except CmglError:
        value, fit, beta_full, converged = math.inf, None, None, False
    trace = [(_with_intercept(current), value)]

    while current:
        best = None
        for j in current:
            cand = tuple(i for i in current if i != j)
            try:
                res = scorer.score(cand, warm_full=beta_full)
            except CmglError:
                res = (math.inf, None, None, False)
            trace.append((_with_intercept(cand), res[0]))
            if best is None or res[0] <= best[0]:
                best = (res[0], cand, res[1], res[2], res[3])
        if best[0] < value:
            value, current = best[0], best[1]
            fit, beta_full, converged = best[2], best[3], best[4]
        else:
            break

    _fill_variance(fit, y, ws, current, estimator)
    if beta_full is None:
        beta_full = np.full(ws.k + 1, np.nan)
    return SelectionResult(
        support=_with_intercept(current),
        beta=beta_full,
        ebic=value,
        estimator=estimator,
        link=get_link(link).name,
        gamma=gamma,
        trace=tuple(trace),
        fit=fit,
        converged=converged,
    )


def exhaustive_select(
    y,
    weights,
    link="identity",
    estimator: str = "qmle",
    gamma: float = 0.5,
    **fit_kwargs,
) -> SelectionResult:
    """Scan every subset of the weight matrices and keep the EBIC minimum.

    Intended for small K (refuses K > 20). Ties are broken toward fewer
    selected matrices, then lexicographically. The full-model fit warm
    starts every submodel refit.
    """
    ws = weights if isinstance(weights, WeightSet) else WeightSet.from_matrices(weights)
    y = check_samples(y, p=ws.p)
    if ws.k > _EXHAUSTIVE_K_MAX:
        raise InputError(
            f"exhaustive search over 2^{ws.k} subsets refused; K must be "
            f"<= {_EXHAUSTIVE_K_MAX}"
        )
    if not gamma >= 0:
        raise InputError("gamma must be nonnegative")
    scorer = _make_scorer(y, ws, link, estimator, gamma, fit_kwargs)

    full = tuple(range(1, ws.k + 1))
    try:
        _, _, warm, _ = scorer.score(full)
    except CmglError:
        warm = None

    trace = []
    best = None
    for mask in range(2**ws.k):
        subset = tuple(i for i in range(1, ws.k + 1) if mask >> (i - 1) & 1)
        try:
            res = scorer.score(subset, warm_full=warm)
        except CmglError:
            res = (math.inf, None, None, False)
        trace.append((_with_intercept(subset), res[0]))
        key = (res[0], len(subset), subset)
        if best is None or key < best[0]:
            best = (key, subset, res[1], res[2], res[3])

    _, subset, fit, beta_full, converged = best
    _fill_variance(fit, y, ws, subset, estimator)
    if beta_full is None:
        beta_full = np.full(ws.k + 1, np.nan)
    return SelectionResult(
        support=_with_intercept(subset),
        beta=beta_full,
        ebic=best[0][0],
        estimator=estimator,
        link=get_link(link).name,
        gamma=gamma,
        trace=tuple(trace),
        fit=fit,
        converged=converged,
    )
