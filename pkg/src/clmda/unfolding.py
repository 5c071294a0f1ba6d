"""SMACOF-type majorization for the distance (proximity) models.

The least-squares subproblem is raw STRESS with dissimilarities
delta = -lambda, which may be negative.  Negative dissimilarities get
their own quadratic majorizer: they contribute no linear term (a = 0)
and inflate the weight instead.  Row and column blocks are updated in
turn, and the majorization matrices are rebuilt at the current
configuration before each block so every half-step is a descent step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateWeights, SingularDesign

#: the small constant used when a negative dissimilarity meets a zero distance
EPS = 1e-8
#: distances at or below this count as zero
ZERO_DISTANCE = 1e-12


@dataclass
class MajorizationMatrices:
    A: np.ndarray
    W: np.ndarray
    row_w: np.ndarray
    col_w: np.ndarray
    row_a: np.ndarray
    col_a: np.ndarray


def distances(U, V) -> np.ndarray:
    """Euclidean distances between the rows of U (N x S) and V (R x S)."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    diff = U[:, None, :] - V[None, :, :]
    return np.sqrt(np.einsum("irs,irs->ir", diff, diff))


def stress(delta, D, W=None) -> float:
    """Weighted raw STRESS sum w (delta - d)^2."""
    res = np.asarray(delta, dtype=float) - np.asarray(D, dtype=float)
    if W is None:
        return float(np.sum(res * res))
    return float(np.sum(W * res * res))


def build_majorization(delta, D, base_w=None, eps=EPS) -> MajorizationMatrices:
    delta = np.asarray(delta, dtype=float)
    D = np.asarray(D, dtype=float)
    positive = D > ZERO_DISTANCE
    safe_d = np.where(positive, D, 1.0)
    neg = delta < 0
    A = np.where(neg, 0.0, delta / safe_d)
    A[~positive] = 0.0
    W = np.ones_like(delta)
    if neg.any():
        # negative dissimilarities: weight (d + |delta|) / d, or (eps + delta^2) / eps at d = 0
        W[neg] = np.where(positive, (safe_d - delta) / safe_d, (eps + delta * delta) / eps)[neg]
    if base_w is not None:
        base_w = np.asarray(base_w, dtype=float)
        A *= base_w
        W *= base_w
    row_w = W.sum(axis=1)
    col_w = W.sum(axis=0)
    if row_w.min() <= 0 or col_w.min() <= 0:
        raise DegenerateWeights("a row or column of the weight matrix sums to zero")
    return MajorizationMatrices(A, W, row_w, col_w, A.sum(axis=1), A.sum(axis=0))


def update_rows(U, V, M: MajorizationMatrices) -> np.ndarray:
    """U+ = R^{-1} (P U - A V + W V)."""
    return (M.row_a[:, None] * U - M.A @ V + M.W @ V) / M.row_w[:, None]


def update_columns(U, V, M: MajorizationMatrices) -> np.ndarray:
    """V+ = C^{-1} (Q V - A' U + W' U)."""
    return (M.col_a[:, None] * V - M.A.T @ U + M.W.T @ U) / M.col_w[:, None]


def mdu_update(U, V, M: MajorizationMatrices, delta=None, base_w=None, eps=EPS):
    """One unfolding step: rows, then columns against the new rows.

    When ``delta`` is given the majorization matrices are rebuilt at
    (U+, V) before the column step, which keeps STRESS nonincreasing;
    without it ``M`` is reused for both blocks.
    """
    U_new = update_rows(U, V, M)
    if delta is not None:
        M = build_majorization(delta, distances(U_new, V), base_w, eps)
    return U_new, update_columns(U_new, V, M)


def rmdu_update_B(X, U, V, M: MajorizationMatrices) -> np.ndarray:
    """B+ = (X' R X)^{-1} X' (P U - A V + W V); the caller sets U+ = X B+."""
    X = np.asarray(X, dtype=float)
    lhs = X.T @ (M.row_w[:, None] * X)
    rhs = X.T @ (M.row_a[:, None] * U - M.A @ V + M.W @ V)
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign(f"X'RX is singular: {exc}") from exc


def unfold(delta, U, V, X=None, max_inner=64, tol=1e-8, base_w=None, eps=EPS):
    """Inner SMACOF loop from (U, V); restricted to U = X B when X is given.

    Stops when the relative STRESS decrease drops below ``tol`` or after
    ``max_inner`` iterations.  Returns (U, V, B, stress_trace) where the
    trace starts with the STRESS at the initial configuration.
    """
    delta = np.asarray(delta, dtype=float)
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    B = None
    D = distances(U, V)
    trace = [stress(delta, D, base_w)]
    for _ in range(max_inner):
        M = build_majorization(delta, D, base_w, eps)
        if X is None:
            U = update_rows(U, V, M)
        else:
            B = rmdu_update_B(X, U, V, M)
            U = X @ B
        M = build_majorization(delta, distances(U, V), base_w, eps)
        V = update_columns(U, V, M)
        D = distances(U, V)
        trace.append(stress(delta, D, base_w))
        if trace[-2] - trace[-1] < tol * max(trace[-2], 1e-300):
            break
    return U, V, B, trace
