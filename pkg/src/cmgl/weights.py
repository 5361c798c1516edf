"""Construction of symmetric, zero-diagonal weight matrices from covariates.

Weight matrices encode pairwise similarity between the p coordinates of the
response vector. Three constructions are supported: a Gaussian kernel on a
continuous covariate, a same-group indicator on a discrete covariate, and a
distance-thresholded kernel whose sparsity is pinned to a target density.
A :class:`WeightSet` bundles the user-supplied matrices W_1..W_K together
with the implicit identity W_0 and provides the bulk linear-algebra kernels
(linear combination, Frobenius dots, trace Gram matrix) used by the
estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError

__all__ = [
    "CovariateColumn",
    "WeightSet",
    "build_continuous",
    "build_discrete",
    "build_thresholded",
    "build_from_column",
    "density",
]


@dataclass(frozen=True)
class CovariateColumn:
    """One covariate observed on the p entities.

    Parameters
    ----------
    values : ndarray of shape (p,)
        Continuous values or discrete group labels.
    kind : {"continuous", "discrete"}
    name : str, optional
        Column name from the source file, for error messages and exports.
    """

    values: np.ndarray
    kind: str
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise InputError(f"unknown covariate kind {self.kind!r}")
        values = np.asarray(self.values)
        if values.ndim != 1 or values.shape[0] < 2:
            raise InputError("covariate must be a 1-d sequence of length >= 2")
        if self.kind == "continuous":
            values = np.asarray(values, dtype=float)
            if not np.all(np.isfinite(values)):
                raise InputError(
                    f"covariate {self.name or '<unnamed>'} has non-finite values"
                )
        object.__setattr__(self, "values", values)

    @property
    def p(self) -> int:
        return self.values.shape[0]


def _check_continuous(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise InputError("covariate must be a 1-d sequence of length >= 2")
    if not np.all(np.isfinite(x)):
        raise InputError("covariate has non-finite values")
    return x


def build_continuous(x, scale: float = 1.0) -> np.ndarray:
    """Gaussian-kernel weight matrix for a continuous covariate.

    Off-diagonal entries are exp(-scale * (x_i - x_j)^2); the diagonal is
    zero. ``scale=1`` is the classical kernel; larger values sharpen it.

    Parameters
    ----------
    x : array-like of shape (p,)
    scale : float
        Positive kernel decay rate.

    Returns
    -------
    ndarray of shape (p, p)
    """
    x = _check_continuous(x)
    if not scale > 0:
        raise InputError("scale must be positive")
    diff = x[:, None] - x[None, :]
    w = np.exp(-scale * diff * diff)
    np.fill_diagonal(w, 0.0)
    return w


def build_discrete(x) -> np.ndarray:
    """Same-group indicator weight matrix for a discrete covariate.

    Entry (i, j) is 1 when labels i and j coincide, 0 otherwise; the
    diagonal is zero.
    """
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] < 2:
        raise InputError("covariate must be a 1-d sequence of length >= 2")
    w = (x[:, None] == x[None, :]).astype(float)
    np.fill_diagonal(w, 0.0)
    return w


def build_thresholded(
    dist, target_density: float, scale: float = 1.0
) -> np.ndarray:
    """Distance-thresholded kernel weight matrix with pinned density.

    Keeps the ``round(target_density * m)`` closest pairs (m = number of
    strict upper-triangle pairs, halves rounded down), sets their weights to
    exp(-scale * dist^2) and everything else to zero. Ties at the cutoff
    distance are admitted in lexicographic (i, j) order, which makes the
    construction deterministic.

    Parameters
    ----------
    dist : ndarray of shape (p, p)
        Nonnegative symmetric distances with zero diagonal.
    target_density : float in (0, 1)
        Desired fraction of nonzero off-diagonal entries. The achieved
        density matches it up to quantization by the discrete pair count.
    scale : float
        Positive kernel decay rate.

    Returns
    -------
    ndarray of shape (p, p)
    """
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] < 2:
        raise InputError("dist must be a square matrix with p >= 2")
    if not np.all(np.isfinite(dist)) or np.any(dist < 0):
        raise InputError("dist must be finite and nonnegative")
    if not np.array_equal(dist, dist.T):
        raise InputError("dist must be symmetric")
    if np.any(np.diagonal(dist) != 0):
        raise InputError("dist must have a zero diagonal")
    if not 0.0 < target_density < 1.0:
        raise InputError("target_density must lie strictly between 0 and 1")
    if not scale > 0:
        raise InputError("scale must be positive")

    p = dist.shape[0]
    rows, cols = np.triu_indices(p, k=1)
    d = dist[rows, cols]
    m = d.shape[0]
    # Nearest pair count to target_density * m, halves rounded down.
    budget = int(math.ceil(target_density * m - 0.5 - 1e-12))
    budget = min(max(budget, 0), m)

    order = np.lexsort((cols, rows, d))
    keep = order[:budget]
    w = np.zeros((p, p))
    w[rows[keep], cols[keep]] = np.exp(-scale * d[keep] ** 2)
    w[cols[keep], rows[keep]] = w[rows[keep], cols[keep]]
    return w


def build_from_column(column: CovariateColumn, scale: float = 1.0) -> np.ndarray:
    """Dispatch to the kernel or indicator construction by covariate kind."""
    if column.kind == "continuous":
        return build_continuous(column.values, scale=scale)
    return build_discrete(column.values)


def density(w) -> float:
    """Fraction of nonzero off-diagonal entries of a weight matrix."""
    w = validate_weight_matrix(w)
    p = w.shape[0]
    return np.count_nonzero(w) / (p * (p - 1))


def validate_weight_matrix(w) -> np.ndarray:
    """Check symmetry and zero diagonal; return the matrix as float64."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 2:
        raise InputError("weight matrix must be square with p >= 2")
    if not np.all(np.isfinite(w)):
        raise InputError("weight matrix has non-finite entries")
    if not np.array_equal(w, w.T):
        raise InputError("weight matrix must be symmetric")
    if np.any(np.diagonal(w) != 0):
        raise InputError("weight matrix must have a zero diagonal")
    return w


@dataclass(frozen=True)
class WeightSet:
    """Ordered collection (W_0 = I, W_1, ..., W_K) of p x p weight matrices.

    Only W_1..W_K are stored; the identity W_0 is implicit at index 0 and is
    never user-supplied. Instances are immutable and safe to share across
    threads. The matrices are kept stacked in one contiguous array so that
    the hot estimator kernels reduce to single BLAS calls.
    """

    stack: np.ndarray  # (K, p, p), validated weight matrices
    _flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        stack = np.asarray(self.stack, dtype=float)
        if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
            raise InputError("stack must have shape (K, p, p)")
        object.__setattr__(self, "stack", stack)
        object.__setattr__(
            self,
            "_flat",
            stack.reshape(stack.shape[0], stack.shape[1] * stack.shape[2]),
        )

    @classmethod
    def from_matrices(cls, matrices, p: int | None = None) -> "WeightSet":
        """Build from an iterable of W_1..W_K, validating each matrix."""
        mats = [validate_weight_matrix(w) for w in matrices]
        if not mats:
            if p is None:
                raise InputError("an empty WeightSet needs an explicit p")
            return cls(np.empty((0, p, p)))
        sizes = {w.shape[0] for w in mats}
        if len(sizes) != 1:
            raise InputError("all weight matrices must share one dimension p")
        if p is not None and mats[0].shape[0] != p:
            raise InputError(f"weight matrices are {mats[0].shape[0]}x... , expected p={p}")
        return cls(np.stack(mats))

    @property
    def p(self) -> int:
        return self.stack.shape[1]

    @property
    def k(self) -> int:
        """Number of user-supplied matrices K (excludes the identity)."""
        return self.stack.shape[0]

    @property
    def n_terms(self) -> int:
        """Length K + 1 of the coefficient vector, identity included."""
        return self.stack.shape[0] + 1

    def matrix(self, index: int) -> np.ndarray:
        """Return W_index; index 0 is the identity."""
        if index == 0:
            return np.eye(self.p)
        return self.stack[index - 1]

    def combine(self, beta) -> np.ndarray:
        """Linear combination B = beta_0 I + sum_k beta_k W_k."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_terms,):
            raise InputError(
                f"beta has length {beta.size}, expected {self.n_terms}"
            )
        if not np.all(np.isfinite(beta)):
            raise InputError("beta has non-finite entries")
        b = (self._flat.T @ beta[1:]).reshape(self.p, self.p)
        b.flat[:: self.p + 1] += beta[0]
        return b

    def frob_dots(self, a: np.ndarray) -> np.ndarray:
        """Vector of Frobenius inner products (<A, W_0>, ..., <A, W_K>).

        For symmetric A these equal the traces tr(A W_k); they are the
        building block of scores and information matrices.
        """
        out = np.empty(self.n_terms)
        out[0] = np.trace(a)
        if self.k:
            out[1:] = self._flat @ a.ravel()
        return out

    def trace_gram(self) -> np.ndarray:
        """(K+1) x (K+1) matrix of pairwise traces tr(W_k W_l)."""
        n = self.n_terms
        t = np.empty((n, n))
        t[0, 0] = self.p
        if self.k:
            diag_traces = np.einsum("kii->k", self.stack)
            t[0, 1:] = diag_traces
            t[1:, 0] = diag_traces
            t[1:, 1:] = self._flat @ self._flat.T
        return t

    def subset(self, indices) -> "WeightSet":
        """WeightSet restricted to the non-intercept members of ``indices``.

        ``indices`` are positions in the full model (0 = identity); the
        identity is implicit in the result as always.
        """
        ks = sorted(i for i in indices if i != 0)
        if any(not 1 <= i <= self.k for i in ks):
            raise InputError("subset indices out of range")
        return WeightSet(self.stack[[i - 1 for i in ks]])
