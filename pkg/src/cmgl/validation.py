"""Input validation shared by the estimators, the selector, and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import InputError

__all__ = ["check_samples", "check_beta"]


def check_samples(y, p: int | None = None) -> np.ndarray:
    """Coerce a sample to a finite float64 matrix of shape (n, p).

    A single observation may be passed as a 1-d vector; it is promoted to
    one row. When ``p`` is given the column count must match it.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2:
        raise InputError("sample must be a vector or a matrix of row observations")
    if y.shape[0] < 1 or y.shape[1] < 2:
        raise InputError("sample needs at least one observation of dimension >= 2")
    if not np.all(np.isfinite(y)):
        raise InputError("sample has non-finite entries")
    if p is not None and y.shape[1] != p:
        raise InputError(
            f"sample has dimension {y.shape[1]}, weight matrices have p={p}"
        )
    return y


def check_beta(beta, n_terms: int) -> np.ndarray:
    """Coerce a coefficient vector to shape (n_terms,) finite float64."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (n_terms,):
        raise InputError(
            f"coefficient vector has shape {beta.shape}, expected ({n_terms},)"
        )
    if not np.all(np.isfinite(beta)):
        raise InputError("coefficient vector has non-finite entries")
    return beta
