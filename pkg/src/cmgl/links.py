"""Link functions mapping the linear predictor to a covariance matrix.

The model writes Cov(Y) = Sigma(beta) = G(B) where B = beta_0 I + sum_k
beta_k W_k and G acts on the spectrum of the symmetric matrix B. Every
supported link is therefore fully described by a scalar eigenvalue map g
and its first divided differences: with B = U diag(lam) U', we have
Sigma = U diag(g(lam)) U' and, by the Daleckii-Krein formula,

    dSigma[W] = U (L o (U' W U)) U',   L_ij = (g(lam_i) - g(lam_j)) / (lam_i - lam_j),

with g'(lam_i) on the diagonal of L. One eigendecomposition per candidate
beta powers the likelihood, the score, and the plug-in variance formulas;
:class:`Spectral` caches it and exposes those primitives.

Links
-----
identity
    Sigma = B. Feasible iff B is positive definite.
exponential
    Sigma = expm(B), positive definite for every symmetric B.
square
    Sigma = B^2, positive definite iff B is nonsingular.
inverse
    Sigma = B^{-1}. Feasible iff B is positive definite.
sar
    Sigma = (B B')^{-1} = B^{-2}, the covariance of the simultaneous
    autoregression B Y = eps. Feasible iff B is nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .exceptions import InputError, NotPositiveDefiniteError, SingularBError

__all__ = ["LINKS", "LinkMap", "get_link", "Spectral", "PD_RTOL"]

# Mapped eigenvalues g(lam) must satisfy g_min > PD_RTOL * g_max for the
# covariance to count as numerically positive definite.
PD_RTOL = 1e-10

# Eigenvalue gaps below this width switch the exponential divided
# difference to its midpoint limit to avoid catastrophic cancellation.
_EXP_DEGENERATE_GAP = 1e-8


def _exp_loewner(lam: np.ndarray) -> np.ndarray:
    diff = lam[:, None] - lam[None, :]
    near = np.abs(diff) < _EXP_DEGENERATE_GAP
    num = np.exp(lam)[:, None] - np.exp(lam)[None, :]
    out = np.divide(num, diff, out=np.zeros_like(diff), where=~near)
    mid = np.exp(0.5 * (lam[:, None] + lam[None, :]))
    return np.where(near, mid, out)


def _sum_outer(lam: np.ndarray) -> np.ndarray:
    return lam[:, None] + lam[None, :]


@dataclass(frozen=True)
class LinkMap:
    """Scalar eigenvalue map of one link and its derived quantities.

    Attributes
    ----------
    name : str
    g : callable
        Eigenvalue map applied entrywise to the spectrum of B.
    loewner : callable
        lam -> matrix of first divided differences of g, with g' on the
        diagonal.
    inverse_scalar : callable
        Scalar inverse of g, used to initialize the intercept so that
        g(beta_0) matches the average signal level of the sample.
    """

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    loewner: Callable[[np.ndarray], np.ndarray]
    inverse_scalar: Callable[[float], float]


_REGISTRY = {
    "identity": LinkMap(
        name="identity",
        g=lambda lam: lam.copy(),
        loewner=lambda lam: np.ones((lam.shape[0], lam.shape[0])),
        inverse_scalar=lambda m: m,
    ),
    "exponential": LinkMap(
        name="exponential",
        g=np.exp,
        loewner=_exp_loewner,
        inverse_scalar=np.log,
    ),
    "square": LinkMap(
        name="square",
        g=lambda lam: lam * lam,
        loewner=_sum_outer,
        inverse_scalar=np.sqrt,
    ),
    "inverse": LinkMap(
        name="inverse",
        g=lambda lam: 1.0 / lam,
        loewner=lambda lam: -1.0 / np.outer(lam, lam),
        inverse_scalar=lambda m: 1.0 / m,
    ),
    "sar": LinkMap(
        name="sar",
        g=lambda lam: 1.0 / (lam * lam),
        loewner=lambda lam: -_sum_outer(lam) / np.outer(lam * lam, lam * lam),
        inverse_scalar=lambda m: 1.0 / np.sqrt(m),
    ),
}

LINKS = tuple(sorted(_REGISTRY))


def get_link(name) -> LinkMap:
    """Look up a link by name, accepting a LinkMap passthrough."""
    if isinstance(name, LinkMap):
        return name
    try:
        return _REGISTRY[name]
    except (KeyError, TypeError):
        raise InputError(
            f"unknown link {name!r}; available links: {', '.join(LINKS)}"
        ) from None


class Spectral:
    """Eigendecomposition of one linear predictor B under one link.

    Wraps lam, U from ``eigh(B)`` together with the mapped eigenvalues
    g(lam) and answers all covariance queries (log-determinant, quadratic
    forms, directional derivatives, adjoint pullbacks) without forming
    more than a constant number of p x p intermediates.

    Two levels of validity are tracked. ``finite`` means the mapped
    eigenvalues exist (B nonsingular where the link inverts it, no
    overflow); ``sigma`` and ``dsigma`` only need this and raise
    ``SingularBError`` otherwise. ``feasible`` additionally means the
    covariance is numerically positive definite, g_min > PD_RTOL * g_max;
    accessors that invert or factor Sigma require it and raise
    ``NotPositiveDefiniteError`` when it fails. Estimators test the flag
    instead of catching.
    """

    def __init__(self, link: LinkMap, lam: np.ndarray, u: np.ndarray):
        self.link = link
        self.lam = lam
        self.u = u
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            g = link.g(lam)
        self.g = g
        gmax = np.max(g) if g.size else np.nan
        self.finite = bool(np.all(np.isfinite(g)))
        self.feasible = bool(
            self.finite and gmax > 0 and np.min(g) > PD_RTOL * gmax
        )
        self._loewner = None

    @classmethod
    def from_b(cls, link, b: np.ndarray) -> "Spectral":
        """Decompose a symmetric predictor matrix B under ``link``."""
        link = get_link(link)
        b = np.asarray(b, dtype=float)
        if b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise InputError("B must be a square matrix")
        if not np.all(np.isfinite(b)):
            raise InputError("B has non-finite entries")
        lam, u = scipy.linalg.eigh(b)
        return cls(link, lam, u)

    @property
    def p(self) -> int:
        return self.lam.shape[0]

    def _require_finite(self):
        if not self.finite:
            raise SingularBError(
                f"link {self.link.name!r} is undefined at this predictor "
                "(singular B or overflow in the eigenvalue map)"
            )

    def _require_feasible(self):
        self._require_finite()
        if not self.feasible:
            raise NotPositiveDefiniteError(
                f"link {self.link.name!r} does not map this predictor to a "
                f"positive definite covariance (mapped eigenvalue range "
                f"[{np.min(self.g):.3e}, {np.max(self.g):.3e}])"
            )

    def loewner(self) -> np.ndarray:
        """Divided-difference matrix L of the link at the spectrum."""
        if self._loewner is None:
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                self._loewner = self.link.loewner(self.lam)
        return self._loewner

    def sigma(self) -> np.ndarray:
        """Covariance matrix Sigma = U diag(g) U', exactly symmetric.

        Defined whenever the eigenvalue map is finite; positive
        definiteness is reported by ``feasible``, not enforced here.
        """
        self._require_finite()
        s = (self.u * self.g) @ self.u.T
        return (s + s.T) / 2.0

    def sigma_inv(self) -> np.ndarray:
        self._require_feasible()
        s = (self.u / self.g) @ self.u.T
        return (s + s.T) / 2.0

    def inv_sqrt(self) -> np.ndarray:
        """Symmetric inverse square root Sigma^{-1/2}."""
        self._require_feasible()
        s = (self.u / np.sqrt(self.g)) @ self.u.T
        return (s + s.T) / 2.0

    def sqrt(self) -> np.ndarray:
        """Symmetric square root Sigma^{1/2}."""
        self._require_feasible()
        s = (self.u * np.sqrt(self.g)) @ self.u.T
        return (s + s.T) / 2.0

    def logdet(self) -> float:
        """log det Sigma = sum of log mapped eigenvalues."""
        self._require_feasible()
        return float(np.sum(np.log(self.g)))

    def rotate(self, y: np.ndarray) -> np.ndarray:
        """Coordinates of the rows of y in the eigenbasis, y @ U."""
        return y @ self.u

    def quad_forms(self, y: np.ndarray) -> np.ndarray:
        """Quadratic forms y_i' Sigma^{-1} y_i for each row of y."""
        self._require_feasible()
        z = self.rotate(np.atleast_2d(y))
        return np.einsum("ij,ij->i", z, z / self.g)

    def dsigma(self, w: np.ndarray) -> np.ndarray:
        """Directional derivative of Sigma along a symmetric matrix w."""
        self._require_finite()
        lw = self.loewner()
        if not np.all(np.isfinite(lw)):
            raise SingularBError(
                f"derivative of link {self.link.name!r} is undefined at "
                "this predictor"
            )
        v = self.u.T @ w @ self.u
        d = self.u @ (lw * v) @ self.u.T
        return (d + d.T) / 2.0

    def pullback(self, a_rot: np.ndarray) -> np.ndarray:
        """Adjoint map U (L o A_rot) U' for a matrix in eigenbasis coords.

        For symmetric A with A_rot = U' A U the result P satisfies
        <P, W> = <A, dSigma[W]> for every symmetric W, so one pullback
        turns the gradient of any spectral functional into gradients with
        respect to all weight-matrix coefficients at p^2 cost each.
        """
        return self.u @ (self.loewner() * a_rot) @ self.u.T
