"""Estimator-object interface over the functional fitting routines.

Each class follows the usual fit/score estimator protocol: constructor
arguments are stored verbatim as parameters, ``fit(X)`` computes and
attaches trailing-underscore attributes, and ``get_params`` /
``set_params`` come from the shared base class. The functional layer
assumes mean-zero rows; these wrappers optionally remove column means
first (``assume_centered=False``), which is only possible when the
sample has more than one row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .estimate import fit_ols, fit_qmle, loglik
from .exceptions import InputError
from .select import backward_select, exhaustive_select
from .validation import check_samples
from .weights import WeightSet

__all__ = ["QmleCovariance", "OlsCovariance", "EbicSelector"]


def _prepare(estimator, X):
    ws = estimator.weights
    if not isinstance(ws, WeightSet):
        ws = WeightSet.from_matrices(ws)
    X = check_samples(X, p=ws.p)
    location = np.zeros(X.shape[1])
    if not estimator.assume_centered and X.shape[0] > 1:
        location = X.mean(axis=0)
        X = X - location
    return ws, X, location


class QmleCovariance(BaseEstimator):
    """Quasi-maximum-likelihood covariance fit with a chosen link.

    Parameters
    ----------
    weights : WeightSet or iterable of weight matrices
    link : str
    assume_centered : bool
        Treat the rows of X as already mean zero. Otherwise column means
        are removed first, which requires more than one row.
    max_iter, gtol, step_tol : optimizer settings
    compute_vcov : bool
        Also compute the plug-in sampling variance of the coefficients.

    Attributes
    ----------
    coef_ : ndarray of shape (K + 1,)
    covariance_ : ndarray of shape (p, p)
    sd_, vcov_, mu4_ : plug-in variance results (None unless computed)
    loglik_ : float
    n_iter_ : int
    converged_ : bool
    location_ : ndarray of shape (p,)
        Column means removed before fitting (zeros if none were).
    """

    def __init__(
        self,
        weights,
        link: str = "exponential",
        assume_centered: bool = False,
        max_iter: int = 200,
        gtol: float = 1e-6,
        step_tol: float = 1e-10,
        compute_vcov: bool = True,
    ):
        self.weights = weights
        self.link = link
        self.assume_centered = assume_centered
        self.max_iter = max_iter
        self.gtol = gtol
        self.step_tol = step_tol
        self.compute_vcov = compute_vcov

    def fit(self, X, y=None):
        ws, X, location = _prepare(self, X)
        res = fit_qmle(
            X,
            ws,
            self.link,
            max_iter=self.max_iter,
            gtol=self.gtol,
            step_tol=self.step_tol,
            vcov=self.compute_vcov,
        )
        self.location_ = location
        self.coef_ = res.beta
        self.covariance_ = res.state.sigma()
        self.loglik_ = res.loglik
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.sd_, self.vcov_, self.mu4_ = res.sd, res.vcov, res.mu4
        self.n_features_in_ = X.shape[1]
        self._ws = ws
        return self

    def score(self, X, y=None) -> float:
        """Average quasi-loglikelihood per row of X under the fitted model."""
        X = check_samples(X, p=self.n_features_in_) - self.location_
        return loglik(self.coef_, X, self._ws, self.link) / X.shape[0]


class OlsCovariance(BaseEstimator):
    """Closed-form least-squares covariance fit (identity link).

    Same interface as :class:`QmleCovariance`; the fitted covariance is
    the plain linear combination and may fail to be positive definite,
    in which case ``score`` raises.
    """

    def __init__(
        self,
        weights,
        assume_centered: bool = False,
        compute_vcov: bool = True,
    ):
        self.weights = weights
        self.assume_centered = assume_centered
        self.compute_vcov = compute_vcov

    def fit(self, X, y=None):
        ws, X, location = _prepare(self, X)
        res = fit_ols(X, ws, vcov=self.compute_vcov)
        self.location_ = location
        self.coef_ = res.beta
        self.covariance_ = ws.combine(res.beta)
        self.sd_, self.vcov_, self.mu4_ = res.sd, res.vcov, res.mu4
        self.converged_ = True
        self.n_features_in_ = X.shape[1]
        self._ws = ws
        return self

    def score(self, X, y=None) -> float:
        """Average identity-link quasi-loglikelihood per row of X."""
        X = check_samples(X, p=self.n_features_in_) - self.location_
        return loglik(self.coef_, X, self._ws, "identity") / X.shape[0]


class EbicSelector(BaseEstimator):
    """Subset selection of weight matrices by EBIC search.

    Parameters
    ----------
    weights : WeightSet or iterable of weight matrices
    link, estimator, gamma : selection settings
    method : {"backward", "exhaustive"}
    assume_centered : bool

    Attributes
    ----------
    support_ : tuple of int
        Chosen indices including the intercept 0.
    coef_ : ndarray of shape (K + 1,)
        Refit coefficients, zeros off-support.
    ebic_ : float
    covariance_ : ndarray or None
        Covariance of the winning refit.
    trace_ : tuple of (support, ebic) pairs
    converged_ : bool
    """

    def __init__(
        self,
        weights,
        link: str = "identity",
        estimator: str = "qmle",
        gamma: float = 0.5,
        method: str = "backward",
        assume_centered: bool = False,
    ):
        self.weights = weights
        self.link = link
        self.estimator = estimator
        self.gamma = gamma
        self.method = method
        self.assume_centered = assume_centered

    def fit(self, X, y=None):
        ws, X, location = _prepare(self, X)
        search = {"backward": backward_select, "exhaustive": exhaustive_select}
        if self.method not in search:
            raise InputError("method must be 'backward' or 'exhaustive'")
        res = search[self.method](
            X, ws, link=self.link, estimator=self.estimator, gamma=self.gamma
        )
        self.location_ = location
        self.support_ = res.support
        self.coef_ = res.beta
        self.ebic_ = res.ebic
        self.trace_ = res.trace
        self.converged_ = res.converged
        if res.fit is None:
            self.covariance_ = None
        elif self.estimator == "qmle":
            self.covariance_ = res.fit.state.sigma()
        else:
            self.covariance_ = ws.combine(res.beta)
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self, indices: bool = True):
        """Chosen weight-matrix indices, or a boolean mask over 0..K."""
        if indices:
            return self.support_
        k = self.coef_.shape[0]
        mask = np.zeros(k, dtype=bool)
        mask[list(self.support_)] = True
        return mask
