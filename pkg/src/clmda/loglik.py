"""Logistic-distribution machinery shared by all estimators.

Category probabilities, the observed-data negative log-likelihood, the
closed-form E-step and working responses.  Everything here is pure and
vectorised over cells; thresholds are passed as a list with one
increasing array per variable.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .exceptions import NumericalError

#: smallest probability allowed inside a log
PROB_FLOOR = 1e-300

#: E[L_c] and the observed NLL both have second derivative <= 1/2 in theta
SAFE_HESSIAN_BOUND = 0.5
#: default constant, giving working responses theta - 4 xi; it can overshoot,
#: so the driver falls back to SAFE_HESSIAN_BOUND whenever a step fails to descend
DEFAULT_HESSIAN_BOUND = 0.25

diagnostics = {"clamped": 0}


def logistic_cdf(eta):
    """F(eta) = 1 / (1 + exp(-eta)), stable in both tails (F(-inf) = 0, F(inf) = 1)."""
    out = expit(np.asarray(eta, dtype=float))
    return out if out.ndim else float(out)


def logistic_pdf(eta):
    eta = np.asarray(eta, dtype=float)
    e = np.exp(-np.abs(eta))
    out = e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


def logistic_logpdf(eta):
    """log f(eta) = -eta - 2 log(1 + exp(-eta)), written symmetric in eta."""
    a = np.abs(np.asarray(eta, dtype=float))
    out = -a - 2.0 * np.log1p(np.exp(-a))
    return out if out.ndim else float(out)


def extended(m):
    """Thresholds padded with -inf and +inf."""
    return np.concatenate(([-np.inf], np.asarray(m, dtype=float), [np.inf]))


def _interval_prob(a, b):
    # F(b) - F(a) without cancellation when both ends sit in the upper tail
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(
        upper,
        logistic_cdf(-a) - logistic_cdf(-b),
        logistic_cdf(b) - logistic_cdf(a),
    )


def _check_category(c, n_cats):
    c = np.asarray(c)
    if np.any(c < 1) or np.any(c > n_cats):
        raise IndexError(f"category out of range 1..{n_cats}")


def category_prob(theta, m, c):
    """P(y = c) = F(m_c - theta) - F(m_{c-1} - theta)."""
    ext = extended(m)
    _check_category(c, len(ext) - 1)
    c = np.asarray(c)
    theta = np.asarray(theta, dtype=float)
    out = _interval_prob(ext[c - 1] - theta, ext[c] - theta)
    return out if out.ndim else float(out)


def category_probs(theta, m):
    """All category probabilities; last axis indexes categories."""
    ext = extended(m)
    theta = np.asarray(theta, dtype=float)[..., None]
    return _interval_prob(ext[:-1] - theta, ext[1:] - theta)


def cumulative_logits(theta, m):
    """logit P(y <= c) = m_c - theta for c = 1..C-1 (last axis)."""
    return np.asarray(m, dtype=float) - np.asarray(theta, dtype=float)[..., None]


def _codes(ds):
    return np.asarray(getattr(ds, "codes", ds))


def cell_bounds(codes, thresholds):
    """Lower and upper latent bounds (m_{y-1}, m_y) for every cell."""
    codes = np.asarray(codes)
    lower = np.empty(codes.shape)
    upper = np.empty(codes.shape)
    for r, m in enumerate(thresholds):
        ext = extended(m)
        _check_category(codes[:, r], len(ext) - 1)
        lower[:, r] = ext[codes[:, r] - 1]
        upper[:, r] = ext[codes[:, r]]
    return lower, upper


def cell_probs(theta, thresholds, ds):
    lower, upper = cell_bounds(_codes(ds), thresholds)
    return _interval_prob(lower - theta, upper - theta)


def observed_nll(theta, thresholds, ds, per_variable=False):
    """-sum_i sum_r log pi_{i r y_ir}.

    Probabilities below PROB_FLOOR are clamped (and counted in
    ``diagnostics["clamped"]``); negative or NaN probabilities mean the
    thresholds are corrupt and raise NumericalError.
    """
    theta = np.asarray(theta, dtype=float)
    pi = cell_probs(theta, thresholds, ds)
    if np.any(np.isnan(pi)) or np.any(pi < -1e-15):
        raise NumericalError("invalid category probability (thresholds not increasing?)")
    low = pi < PROB_FLOOR
    if low.any():
        diagnostics["clamped"] += int(low.sum())
        pi = np.maximum(pi, PROB_FLOOR)
    nll = -np.log(pi)
    return nll.sum(axis=0) if per_variable else float(nll.sum())


def _expected_p(lower, upper, theta):
    return 0.5 * (logistic_cdf(lower - theta) + logistic_cdf(upper - theta))


def expected_p(y, theta, m):
    """E[F(z - theta) | m_{y-1} <= z < m_y] with z = theta + logistic noise.

    F(z - theta) is uniform on (F(a), F(b)) under the truncated logistic,
    so the conditional mean is (F(a) + F(b)) / 2 with a = m_{y-1} - theta,
    b = m_y - theta.
    """
    ext = extended(m)
    _check_category(y, len(ext) - 1)
    y = np.asarray(y)
    out = np.asarray(_expected_p(ext[y - 1], ext[y], np.asarray(theta, dtype=float)))
    return out if out.ndim else float(out)


def xi(y, theta, m):
    """Expected complete-data score 1 - 2 E(p | y, theta, m)."""
    out = 1.0 - 2.0 * np.asarray(expected_p(y, theta, m))
    return out if out.ndim else float(out)


def cell_xi(theta, thresholds, ds):
    lower, upper = cell_bounds(_codes(ds), thresholds)
    return 1.0 - 2.0 * np.asarray(_expected_p(lower, upper, np.asarray(theta, dtype=float)))


def working_responses(theta_tilde, ds, thresholds, hessian_bound=DEFAULT_HESSIAN_BOUND):
    """lambda = theta_tilde - xi / hessian_bound, elementwise.

    Minimising sum (theta - lambda)^2 minimises the quadratic majorizer
    xi (theta - theta_tilde) + hessian_bound / 2 (theta - theta_tilde)^2.
    The default ``hessian_bound=0.25`` gives lambda = theta_tilde - 4 xi.
    """
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    return theta_tilde - cell_xi(theta_tilde, thresholds, ds) / hessian_bound


def majorizer(theta, theta_tilde, xi_values, hessian_bound=DEFAULT_HESSIAN_BOUND):
    """Surrogate increment sum xi d + (bound / 2) d^2 with d = theta - theta_tilde."""
    d = np.asarray(theta, dtype=float) - np.asarray(theta_tilde, dtype=float)
    return float(np.sum(xi_values * d + 0.5 * hessian_bound * d * d))
