"""Per-variable maximum-likelihood thresholds with the structural part as offset.

Ordering is kept by optimising t with m_1 = t_1, m_c = m_{c-1} + exp(t_c).
Each step is the Newton direction of the (convex) problem in m, mapped
into t, followed by Armijo backtracking in t.  All variables of a data
matrix are fitted together: function evaluations are vectorised over
cells while step lengths and convergence are tracked per variable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import SeparationWarning
from .loglik import PROB_FLOOR, _interval_prob, logistic_cdf, logistic_pdf

#: thresholds beyond +-CAP signal separation and are capped there
CAP = 30.0
GRAD_TOL = 1e-8
STEP_TOL = 1e-6
MAX_ITER = 200
MAX_HALVINGS = 30
ARMIJO = 1e-4


@dataclass
class ThresholdFit:
    m: np.ndarray
    nll: float
    iterations: int
    converged: bool
    separated: bool = False


def initial_thresholds(y, theta, n_cats):
    """Logits of the empirical cumulative proportions, shifted by mean(theta)."""
    y = np.asarray(y)
    counts = np.bincount(y, minlength=n_cats + 1)[1:].astype(float)
    cum = np.cumsum(counts)[:-1] / counts.sum()
    cum = np.clip(cum, 1e-6, 1 - 1e-6)
    m = np.log(cum / (1 - cum)) + float(np.mean(theta))
    for c in range(1, len(m)):
        m[c] = max(m[c], m[c - 1] + 1e-6)
    return m


class _Problem:
    """Padded threshold problem for R variables with up to K thresholds each."""

    def __init__(self, codes, theta, cats):
        self.y = np.asarray(codes, dtype=np.int64)
        self.theta = np.asarray(theta, dtype=float)
        self.n, self.R = self.y.shape
        self.K = np.asarray(cats, dtype=np.int64) - 1
        self.Kmax = int(self.K.max())
        self.cols = np.broadcast_to(np.arange(self.R), self.y.shape)
        # flat parameter index of m_y (upper) and m_{y-1} (lower) per cell
        self.has_b = self.y <= self.K
        self.has_a = self.y >= 2
        self.ib = self.cols * self.Kmax + (self.y - 1)
        self.ia = self.cols * self.Kmax + (self.y - 2)
        self.mask = np.arange(self.Kmax)[None, :] < self.K[:, None]

    def ext(self, m):
        """R x (Kmax + 2) padded thresholds with -inf / +inf ends."""
        out = np.full((self.R, self.Kmax + 2), np.inf)
        out[:, 0] = -np.inf
        out[:, 1:-1] = np.where(self.mask, m, np.inf)
        return out

    def bounds(self, m):
        e = self.ext(m)
        return e[self.cols, self.y - 1] - self.theta, e[self.cols, self.y] - self.theta

    def nll(self, m):
        a, b = self.bounds(m)
        pi = np.maximum(_interval_prob(a, b), PROB_FLOOR)
        return -np.log(pi).sum(axis=0)

    def derivatives(self, m):
        a, b = self.bounds(m)
        pi = np.maximum(_interval_prob(a, b), PROB_FLOOR)
        fa_ok = np.isfinite(a)
        fb_ok = np.isfinite(b)
        a0 = np.where(fa_ok, a, 0.0)
        b0 = np.where(fb_ok, b, 0.0)
        fa = np.where(fa_ok, logistic_pdf(a0), 0.0)
        fb = np.where(fb_ok, logistic_pdf(b0), 0.0)
        # f'(x) = f(x) (1 - 2 F(x))
        dfa = fa * (1.0 - 2.0 * logistic_cdf(a0))
        dfb = fb * (1.0 - 2.0 * logistic_cdf(b0))
        ga, gb = fa / pi, fb / pi
        size = self.R * self.Kmax
        hb, ha = self.has_b, self.has_a
        grad = np.bincount(self.ib[hb], -gb[hb], size) + np.bincount(self.ia[ha], ga[ha], size)
        diag = np.bincount(self.ib[hb], (gb * gb - dfb / pi)[hb], size) + np.bincount(
            self.ia[ha], (ga * ga + dfa / pi)[ha], size
        )
        both = hb & ha
        off = np.bincount(self.ia[both], (-ga * gb)[both], size)
        grad = grad.reshape(self.R, self.Kmax)
        diag = diag.reshape(self.R, self.Kmax)
        off = off.reshape(self.R, self.Kmax)
        hess = np.zeros((self.R, self.Kmax, self.Kmax))
        k = np.arange(self.Kmax)
        hess[:, k, k] = np.where(self.mask, diag, 1.0)
        k1 = k[:-1]
        hess[:, k1, k1 + 1] = off[:, :-1]
        hess[:, k1 + 1, k1] = off[:, :-1]
        return -np.log(pi).sum(axis=0), np.where(self.mask, grad, 0.0), hess


def _to_t(m, mask):
    t = m.copy()
    t[:, 1:] = np.log(np.where(mask[:, 1:], np.diff(m, axis=1), 1.0))
    return t


def _to_m(t, mask):
    steps = np.where(mask[:, 1:], np.exp(np.minimum(t[:, 1:], 700.0)), 0.0)
    return np.concatenate((t[:, :1], t[:, :1] + np.cumsum(steps, axis=1)), axis=1)


def _solve(hess, grad):
    try:
        return -np.linalg.solve(hess, grad[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(grad)
        for r in range(grad.shape[0]):
            try:
                out[r] = -np.linalg.solve(hess[r], grad[r])
            except np.linalg.LinAlgError:
                out[r] = -grad[r]
        return out


def _fit(codes, theta, cats, init=None, grad_tol=GRAD_TOL, max_iter=MAX_ITER):
    prob = _Problem(codes, theta, cats)
    R, Kmax, mask = prob.R, prob.Kmax, prob.mask
    m = np.zeros((R, Kmax))
    for r in range(R):
        K = prob.K[r]
        start = None if init is None else np.asarray(init[r], dtype=float)
        if start is None or len(start) != K or np.any(np.diff(start) <= 0) or not np.all(np.isfinite(start)):
            start = initial_thresholds(prob.y[:, r], prob.theta[:, r], K + 1)
        m[r, :K] = start
        m[r, K:] = start[-1] + 1.0 + np.arange(Kmax - K)
    t = _to_t(m, mask)
    nll, grad, hess = prob.derivatives(m)
    active = np.ones(R, dtype=bool)
    converged = np.zeros(R, dtype=bool)
    separated = np.zeros(R, dtype=bool)
    iters = np.zeros(R, dtype=int)
    for _ in range(max_iter):
        dm = _solve(hess, grad)
        # a saturated likelihood has a tiny gradient but unit Newton steps
        done = (np.max(np.abs(grad), axis=1) < grad_tol) & (np.max(np.abs(dm), axis=1) < STEP_TOL)
        converged |= done & active
        active &= ~done
        if not active.any():
            break
        slope = np.sum(grad * dm, axis=1)
        bad = ~(slope < 0)
        if bad.any():
            dm[bad] = -grad[bad]
            slope[bad] = -np.sum(grad[bad] ** 2, axis=1)
        dt = dm.copy()
        dt[:, 1:] = np.diff(dm, axis=1) / np.exp(t[:, 1:])
        dt[~mask] = 0.0
        dt[~active] = 0.0
        step = np.ones(R)
        pending = active.copy()
        t_new, m_new, nll_new = t.copy(), m.copy(), nll.copy()
        for _ in range(MAX_HALVINGS + 1):
            tt = t + step[:, None] * dt
            mm = _to_m(tt, mask)
            ordered = np.all(np.where(mask[:, 1:], np.diff(mm, axis=1) > 0, True), axis=1)
            ok_m = np.all(np.isfinite(mm), axis=1) & ordered
            val = prob.nll(np.where(ok_m[:, None], mm, m))
            # a few ulps of slack so steps near the optimum are not rejected on rounding
            slack = 16 * np.finfo(float).eps * np.abs(nll)
            accept = pending & ok_m & (val <= nll + ARMIJO * step * slope + slack)
            t_new[accept], m_new[accept], nll_new[accept] = tt[accept], mm[accept], val[accept]
            pending &= ~accept
            if not pending.any():
                break
            step = np.where(pending, 0.5 * step, step)
        # variables whose line search failed keep their best iterate
        active &= ~pending
        iters += active
        t, m = t_new, m_new
        nll, grad, hess = prob.derivatives(m)
        blown = active & (np.max(np.where(mask, np.abs(m), 0.0), axis=1) > CAP)
        separated |= blown
        active &= ~blown
    converged |= (np.max(np.abs(grad), axis=1) < grad_tol) & (np.max(np.abs(_solve(hess, grad)), axis=1) < STEP_TOL)
    converged &= ~separated
    out = [m[r, : prob.K[r]].copy() for r in range(R)]
    if separated.any():
        warnings.warn(
            f"thresholds diverged beyond +-{CAP:g} (separation); capped",
            SeparationWarning,
            stacklevel=3,
        )
        for r in np.flatnonzero(separated):
            mr = np.clip(out[r], -CAP, CAP)
            for c in range(1, len(mr)):
                mr[c] = max(mr[c], mr[c - 1] + 1e-6)
            out[r] = mr
        mpad = np.array(m)
        for r in range(R):
            mpad[r, : prob.K[r]] = out[r]
        nll = prob.nll(mpad)
    return [
        ThresholdFit(out[r], float(nll[r]), int(iters[r]), bool(converged[r]), bool(separated[r]))
        for r in range(R)
    ]


def fit_thresholds(y_r, theta_r, n_cats, init=None, grad_tol=GRAD_TOL, max_iter=MAX_ITER) -> ThresholdFit:
    """Proportional-odds MLE of the C-1 thresholds of one variable, offset theta_r."""
    y = np.asarray(y_r, dtype=np.int64)[:, None]
    theta = np.asarray(theta_r, dtype=float)[:, None]
    return _fit(y, theta, [n_cats], None if init is None else [init], grad_tol, max_iter)[0]


def fit_all(codes, theta, cats, init=None):
    """Thresholds for every column; returns (list of arrays, list of ThresholdFit)."""
    fits = _fit(codes, theta, cats, init)
    return [f.m for f in fits], fits
