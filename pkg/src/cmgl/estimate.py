"""Quasi-likelihood and least-squares estimation of the coefficient vector.

Two estimators are provided for beta in Sigma(beta) = G(beta_0 I + sum_k
beta_k W_k). The quasi-maximum-likelihood estimator maximizes the Gaussian
quasi-loglikelihood under any link by Fisher scoring: Newton steps in the
expected-information metric with analytic gradients and a
feasibility-aware backtracking line search. The expected information is
positive definite on the whole feasible set, so scoring steps are always
ascent directions. Convergence means a stationary point; when a small
sample sends the likelihood climbing toward the positive-definiteness
boundary (a single observation can make it unbounded there) the step
sizes collapse and the fit is reported as not converged rather than
returning a boundary iterate as an optimum. The least-squares estimator
is the closed-form projection of the sample second moment onto the span
of the weight matrices and applies to the identity link only.

Both come with plug-in estimates of the asymptotic sampling variance that
stay valid for non-Gaussian data through a pooled fourth-moment
correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    DegenerateSampleError,
    InfeasibleStartError,
    InputError,
    SingularGramError,
    SingularInformationError,
)
from .links import LinkMap, Spectral, get_link
from .validation import check_beta, check_samples
from .weights import WeightSet

__all__ = [
    "QmleResult",
    "OlsResult",
    "VarianceEstimate",
    "init_beta",
    "loglik",
    "score",
    "fit_qmle",
    "fit_ols",
    "qmle_variance",
    "ols_variance",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Relative eigenvalue cutoff below which a Gram or information matrix is
# treated as singular.
_RCOND_MIN = 1e-12

_MAX_HALVINGS = 40
_ARMIJO_C1 = 1e-4


@dataclass
class QmleResult:
    """Outcome of a quasi-maximum-likelihood fit.

    Attributes
    ----------
    beta : ndarray of shape (K + 1,)
        Estimated coefficients, intercept first.
    loglik : float
        Quasi-loglikelihood at ``beta``.
    score : ndarray of shape (K + 1,)
        Gradient of the quasi-loglikelihood at ``beta``.
    converged : bool
        Whether a stopping criterion was met within the iteration budget.
    n_iter : int
        Number of accepted scoring steps.
    link : str
    state : Spectral
        Eigendecomposition of the fitted predictor, reused by the
        variance estimator.
    vcov, sd, mu4 : optional
        Plug-in sampling variance of ``beta``, its diagonal square root
        and the pooled fourth moment; filled by the fitting routine
        unless asked not to.
    """

    beta: np.ndarray
    loglik: float
    score: np.ndarray
    converged: bool
    n_iter: int
    link: str
    state: Spectral
    vcov: np.ndarray | None = None
    sd: np.ndarray | None = None
    mu4: float | None = None

    @property
    def n_terms(self) -> int:
        return self.beta.shape[0]


@dataclass
class OlsResult:
    """Outcome of the closed-form least-squares fit (identity link)."""

    beta: np.ndarray
    gram: np.ndarray
    moments: np.ndarray
    vcov: np.ndarray | None = None
    sd: np.ndarray | None = None
    mu4: float | None = None

    @property
    def n_terms(self) -> int:
        return self.beta.shape[0]


@dataclass
class VarianceEstimate:
    """Plug-in sampling variance of an estimated coefficient vector."""

    vcov: np.ndarray
    sd: np.ndarray
    mu4: float


def _as_weightset(weights) -> WeightSet:
    if isinstance(weights, WeightSet):
        return weights
    return WeightSet.from_matrices(weights)


def init_beta(y, weights, link) -> np.ndarray:
    """Default starting point matching the average signal level.

    Sets every weight coefficient to zero and the intercept to the value
    whose mapped eigenvalue equals the mean squared entry of the sample,
    so that Sigma(init) = mean(|Y_i|^2 / p) * I. This point is feasible
    under every link.
    """
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    link = get_link(link)
    m = float(np.mean(y * y))
    if m == 0.0:
        raise DegenerateSampleError("sample is identically zero")
    beta = np.zeros(ws.n_terms)
    beta[0] = float(link.inverse_scalar(m))
    return beta


def _whitened_derivatives(st: Spectral, ws: WeightSet) -> np.ndarray:
    """Stack of H_k = Sigma^{-1/2} dSigma_k Sigma^{-1/2} in eigenbasis
    coordinates, i.e. (L o U'W_kU) / sqrt(g_i g_j).

    Their pairwise Frobenius products give both the expected information
    (times n/2) and the curvature matrix of the plug-in variance.
    """
    u, g, lw = st.u, st.g, st.loewner()
    p = g.shape[0]
    root = np.sqrt(np.outer(g, g))
    hs = np.empty((ws.n_terms, p, p))
    hs[0] = np.diag(np.diagonal(lw) / g)
    for k in range(1, ws.n_terms):
        hs[k] = lw * (u.T @ ws.stack[k - 1] @ u) / root
    return hs


def _newton_direction(info: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Descent direction -info^{-1} g, robust to a rank-deficient info.

    The expected information is a Gram matrix, hence at least positive
    semidefinite; if Cholesky fails its eigenvalues are floored relative
    to the largest before solving.
    """
    try:
        return -scipy.linalg.cho_solve(scipy.linalg.cho_factor(info), g)
    except scipy.linalg.LinAlgError:
        lam, v = np.linalg.eigh(info)
        lam = np.maximum(lam, _RCOND_MIN * max(lam[-1], 1.0))
        return -(v @ ((v.T @ g) / lam))


def _make_objective(y: np.ndarray, ws: WeightSet, link: LinkMap):
    """Closures evaluating the quasi-loglikelihood and its gradient.

    ``evaluate`` returns None at infeasible points, otherwise a triple
    (loglik, state, aux) where aux carries the rotated data needed to
    finish the gradient. ``gradient`` turns one such triple into the
    score vector at p^3 + K p^2 cost via the adjoint pullback of the
    link derivative.
    """
    n, p = y.shape
    # For tall samples one p x p second moment beats rotating every row.
    use_moment = n > 2 * p
    s = (y.T @ y) / n if use_moment else None
    const = -0.5 * n * p * _LOG_2PI

    def evaluate(beta):
        st = Spectral.from_b(link, ws.combine(beta))
        if not st.feasible:
            return None
        if use_moment:
            aux = s @ st.u
            quad = n * float(np.einsum("ij,ij->", st.u, aux / st.g))
        else:
            aux = y @ st.u
            quad = float(np.einsum("ij,ij->", aux, aux / st.g))
        ll = const - 0.5 * n * st.logdet() - 0.5 * quad
        if not np.isfinite(ll):
            return None
        return ll, st, aux

    def gradient(st, aux):
        if use_moment:
            m = st.u.T @ aux
        else:
            m = (aux.T @ aux) / n
        g = st.g
        a_rot = m / np.outer(g, g)
        a_rot.flat[:: p + 1] -= 1.0 / g
        a_rot *= 0.5 * n
        return ws.frob_dots(st.pullback(a_rot))

    return evaluate, gradient


def loglik(beta, y, weights, link) -> float:
    """Gaussian quasi-loglikelihood of the sample at ``beta``.

    Raises ``NotPositiveDefiniteError`` when the link does not map the
    predictor at ``beta`` to a positive definite covariance.
    """
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    beta = check_beta(beta, ws.n_terms)
    st = Spectral.from_b(get_link(link), ws.combine(beta))
    n, p = y.shape
    quad = float(np.sum(st.quad_forms(y)))
    return -0.5 * n * p * _LOG_2PI - 0.5 * n * st.logdet() - 0.5 * quad


def score(beta, y, weights, link) -> np.ndarray:
    """Gradient of the quasi-loglikelihood at ``beta``."""
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    beta = check_beta(beta, ws.n_terms)
    evaluate, gradient = _make_objective(y, ws, get_link(link))
    res = evaluate(beta)
    if res is None:
        raise InfeasibleStartError(
            "beta does not give a positive definite covariance"
        )
    _, st, aux = res
    return gradient(st, aux)


def fit_qmle(
    y,
    weights,
    link,
    beta_init=None,
    max_iter: int = 200,
    gtol: float = 1e-6,
    step_tol: float = 1e-10,
    vcov: bool = True,
) -> QmleResult:
    """Maximize the quasi-loglikelihood by damped Fisher scoring.

    Each step solves the expected-information system for the Newton
    direction and backtracks on both the Armijo condition and
    feasibility, so iterates never leave the region where the link maps
    the predictor to a positive definite covariance. Convergence is
    declared only when the score max-norm falls below
    ``gtol * (1 + |loglik|)``. A step norm below ``step_tol``, a failed
    line search, or an exhausted iteration budget ends the fit with
    ``converged=False`` at the last iterate; with one observation and an
    unbounded boundary divergence this is the expected outcome for draws
    whose likelihood has no interior maximum.

    Parameters
    ----------
    y : ndarray of shape (n, p)
    weights : WeightSet or iterable of weight matrices
    link : str or LinkMap
    beta_init : ndarray of shape (K + 1,), optional
        Starting point; defaults to :func:`init_beta`. Must be feasible,
        else ``InfeasibleStartError`` is raised.
    max_iter : int
        Budget of accepted scoring steps.
    vcov : bool
        Fill the ``vcov``/``sd``/``mu4`` fields of the result via
        :func:`qmle_variance` after the fit converges. Skipping this
        saves a K p^3 pass when only the point estimate is needed.

    Returns
    -------
    QmleResult
    """
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    link = get_link(link)
    if ws.n_terms >= y.shape[0] * y.shape[1]:
        raise InputError(
            f"model has {ws.n_terms} coefficients but the sample carries "
            f"only {y.shape[0] * y.shape[1]} observations"
        )
    if beta_init is None:
        beta = init_beta(y, ws, link)
    else:
        beta = check_beta(beta_init, ws.n_terms)

    n = y.shape[0]
    evaluate, gradient = _make_objective(y, ws, link)
    res = evaluate(beta)
    if res is None:
        raise InfeasibleStartError(
            "starting beta does not give a positive definite covariance"
        )
    ll, st, aux = res
    f = -ll
    g = -gradient(st, aux)

    n_iter = 0
    converged = bool(np.max(np.abs(g)) < gtol * (1.0 + abs(f)))

    while not converged and n_iter < max_iter:
        hs = _whitened_derivatives(st, ws)
        flat = hs.reshape(ws.n_terms, -1)
        info = 0.5 * n * (flat @ flat.T)
        d = _newton_direction(info, g)
        gd = float(g @ d)
        if gd >= 0.0:
            break
        accepted = None
        t = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = beta + t * d
            r = evaluate(cand)
            if r is not None and -r[0] <= f + _ARMIJO_C1 * t * gd:
                accepted = (cand, r)
                break
            t *= 0.5
        if accepted is None:
            break
        n_iter += 1
        cand, (ll_new, st_new, aux_new) = accepted
        step = float(np.linalg.norm(cand - beta))
        beta, f, st, aux = cand, -ll_new, st_new, aux_new
        g = -gradient(st, aux)
        if np.max(np.abs(g)) < gtol * (1.0 + abs(f)):
            converged = True
        elif step < step_tol:
            break

    result = QmleResult(
        beta=beta,
        loglik=-f,
        score=-g,
        converged=converged,
        n_iter=n_iter,
        link=link.name,
        state=st,
    )
    if vcov and converged:
        ve = qmle_variance(result, y, ws)
        result.vcov, result.sd, result.mu4 = ve.vcov, ve.sd, ve.mu4
    return result


def fit_ols(y, weights, vcov: bool = True) -> OlsResult:
    """Closed-form least-squares fit of the identity-link model.

    Solves the normal equations T beta = v with T_kl = tr(W_k W_l) and
    v_k = tr(W_k S), S the sample second moment. The fitted predictor is
    not constrained to be positive definite. With ``vcov`` the
    ``vcov``/``sd``/``mu4`` fields are filled via :func:`ols_variance`.

    Raises
    ------
    SingularGramError
        If the trace Gram matrix T has reciprocal condition number below
        1e-12, i.e. the weight matrices are linearly dependent.
    """
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    n = y.shape[0]
    s = (y.T @ y) / n
    t = ws.trace_gram()
    v = ws.frob_dots(s)
    eigs = np.linalg.eigvalsh(t)
    if eigs[-1] <= 0 or eigs[0] <= _RCOND_MIN * eigs[-1]:
        raise SingularGramError(
            "weight matrices are linearly dependent: trace Gram matrix is "
            f"singular (rcond {max(eigs[0], 0.0) / max(eigs[-1], np.finfo(float).tiny):.2e})"
        )
    beta = np.linalg.solve(t, v)
    result = OlsResult(beta=beta, gram=t, moments=v)
    if vcov:
        ve = ols_variance(result, y, ws)
        result.vcov, result.sd, result.mu4 = ve.vcov, ve.sd, ve.mu4
    return result


def _pooled_mu4(z: np.ndarray) -> float:
    """Pooled fourth moment of the whitened sample entries."""
    return float(np.mean(z**4))


def _check_information(q: np.ndarray, label: str) -> None:
    eigs = np.linalg.eigvalsh(q)
    if eigs[-1] <= 0 or eigs[0] <= _RCOND_MIN * eigs[-1]:
        raise SingularInformationError(
            f"{label} information matrix is singular; standard deviations "
            "are not identified"
        )


def qmle_variance(result: QmleResult, y, weights) -> VarianceEstimate:
    """Plug-in sampling variance of the quasi-likelihood estimator.

    Builds the curvature matrix Q_kl = tr(Sigma^{-1} dSigma_k Sigma^{-1}
    dSigma_l) / p, the diagonal-overlap matrix D_kl needed for the excess
    kurtosis term, and the pooled fourth moment of the whitened sample,
    then assembles the sandwich

        vcov = Q^{-1} (2 Q + (mu4 - 3) D) Q^{-1} / (n p).

    Under Gaussian data mu4 is near 3 and the middle collapses to 2 Q.
    """
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    st = result.state
    n, p = y.shape
    u = st.u

    n_terms = ws.n_terms
    hs = _whitened_derivatives(st, ws)
    flat = hs.reshape(n_terms, -1)
    q = (flat @ flat.T) / p

    diags = np.empty((n_terms, p))
    for k in range(n_terms):
        diags[k] = np.einsum("ij,ij->i", u @ hs[k], u)
    d = (diags @ diags.T) / p

    _check_information(q, "quasi-likelihood")
    z = y @ st.inv_sqrt()
    mu4 = _pooled_mu4(z)

    qinv = np.linalg.inv(q)
    vcov = qinv @ (2.0 * q + (mu4 - 3.0) * d) @ qinv / (n * p)
    vcov = (vcov + vcov.T) / 2.0
    return VarianceEstimate(vcov=vcov, sd=np.sqrt(np.diagonal(vcov)), mu4=mu4)


def ols_variance(result: OlsResult, y, weights) -> VarianceEstimate:
    """Plug-in sampling variance of the least-squares estimator.

    Uses the sandwich Q0^{-1} (2 Q1 + (mu4 - 3) D1) Q0^{-1} / (n p) with
    Q0 the normalized trace Gram matrix, Q1_kl = tr(Sigma W_k Sigma W_l)
    / p and D1 the diagonal overlap of the matrices Sigma^{1/2} W_k
    Sigma^{1/2}. The fitted predictor is projected to the positive
    definite cone (eigenvalues floored at 1e-6 of the largest) before
    taking matrix square roots.
    """
    ws = _as_weightset(weights)
    y = check_samples(y, p=ws.p)
    n, p = y.shape
    b = ws.combine(result.beta)
    lam, u = np.linalg.eigh(b)
    lam_max = lam[-1]
    if not lam_max > 0:
        raise SingularInformationError(
            "fitted covariance has no positive eigenvalue; variance "
            "estimate is undefined"
        )
    lam = np.maximum(lam, 1e-6 * lam_max)
    root = (u * np.sqrt(lam)) @ u.T
    inv_root = (u / np.sqrt(lam)) @ u.T

    n_terms = ws.n_terms
    a = np.empty((n_terms, p, p))
    a[0] = (u * lam) @ u.T
    for k in range(1, n_terms):
        a[k] = root @ ws.stack[k - 1] @ root
    flat = a.reshape(n_terms, -1)
    q1 = (flat @ flat.T) / p
    diags = np.einsum("kii->ki", a)
    d1 = (diags @ diags.T) / p
    q0 = result.gram / p

    _check_information(q0, "least-squares")
    z = y @ inv_root
    mu4 = _pooled_mu4(z)

    q0_inv = np.linalg.inv(q0)
    vcov = q0_inv @ (2.0 * q1 + (mu4 - 3.0) * d1) @ q0_inv / (n * p)
    vcov = (vcov + vcov.T) / 2.0
    return VarianceEstimate(vcov=vcov, sd=np.sqrt(np.diagonal(vcov)), mu4=mu4)
