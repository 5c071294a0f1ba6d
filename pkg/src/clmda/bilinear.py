"""Least-squares updates for the inner-product (dominance) models.

Both updates solve their subproblem globally: a truncated SVD for the
unrestricted model, a generalized SVD in the metric X'X for the
regression-restricted one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, NumericalError, SingularDesign

#: eigenvalues of X'X below this fraction of the largest count as zero
EIGEN_FLOOR = 1e-10


@dataclass
class BilinearParams:
    """Row scores ``U`` (N x S), loadings ``V`` (R x S), coefficients ``B`` (P x S)."""

    U: np.ndarray
    V: np.ndarray
    B: np.ndarray = None

    @property
    def theta(self) -> np.ndarray:
        return self.U @ self.V.T


def _svd(a):
    try:
        P, phi, Qt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    # flip each left vector so its largest-magnitude entry is positive
    idx = np.argmax(np.abs(P), axis=0)
    signs = np.sign(P[idx, np.arange(P.shape[1])])
    signs[signs == 0] = 1.0
    return P * signs, phi, Qt.T * signs


def pca_update(lam, S: int) -> BilinearParams:
    """Best rank-S approximation of the working responses.

    U = sqrt(N) P_S and V = Q_S Phi_S / sqrt(N) from the SVD
    lam = P Phi Q', so that U'U / N = I.
    """
    lam = np.asarray(lam, dtype=float)
    n, r = lam.shape
    if not 1 <= S <= min(n, r):
        raise DimensionError(f"S={S} must lie in 1..min(N, R) = {min(n, r)}")
    if not np.all(np.isfinite(lam)):
        raise NumericalError("non-finite working responses")
    P, phi, Q = _svd(lam)
    root_n = np.sqrt(n)
    return BilinearParams(U=root_n * P[:, :S], V=Q[:, :S] * phi[:S] / root_n)


def inverse_sqrt(X, col_names=None) -> np.ndarray:
    """(X'X)^{-1/2} by symmetric eigendecomposition; rank deficiency raises."""
    X = np.asarray(X, dtype=float)
    evals, evecs = np.linalg.eigh(X.T @ X)
    top = evals.max() if evals.size else 0.0
    if top <= 0 or evals.min() < EIGEN_FLOOR * top:
        j = int(np.argmin(evals))
        load = np.abs(evecs[:, j])
        involved = np.flatnonzero(load > 0.1 * load.max())
        names = [col_names[k] if col_names is not None else f"column {k + 1}" for k in involved]
        raise SingularDesign("rank-deficient predictors; collinear columns: " + ", ".join(names))
    return (evecs / np.sqrt(evals)) @ evecs.T


def rrr_update(lam, X, S: int, inv_sqrt=None) -> BilinearParams:
    """Reduced-rank regression of the working responses on X.

    With (X'X)^{-1/2} X' lam = P Phi Q': B = sqrt(N) (X'X)^{-1/2} P_S,
    V = Q_S Phi_S / sqrt(N), hence B'X'XB / N = I.
    """
    lam = np.asarray(lam, dtype=float)
    X = np.asarray(X, dtype=float)
    n, r = lam.shape
    p = X.shape[1]
    if X.shape[0] != n:
        raise DimensionError(f"X has {X.shape[0]} rows, working responses {n}")
    if not 1 <= S <= min(p, r):
        raise DimensionError(f"S={S} must lie in 1..min(P, R) = {min(p, r)}")
    if inv_sqrt is None:
        inv_sqrt = inverse_sqrt(X)
    P, phi, Q = _svd(inv_sqrt @ (X.T @ lam))
    root_n = np.sqrt(n)
    B = root_n * inv_sqrt @ P[:, :S]
    return BilinearParams(U=X @ B, V=Q[:, :S] * phi[:S] / root_n, B=B)
