"""Outer EMM loop, multiple starts, model selection and the model artifact.

One outer iteration computes working responses at the current structural
part, decreases the least-squares majorizer (a global SVD solve for the
inner-product models, a SMACOF inner loop for the distance models), refits
the thresholds with the new structural part as offset and evaluates the
observed negative log-likelihood.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bilinear import inverse_sqrt, pca_update, rrr_update
from .core import (
    ModelConfig,
    OrdinalDataset,
    PredictorMatrix,
    atomic_write,
    check_complete,
    validate,
)
from .exceptions import EmptyDesign, FitFailure, InputError, NumericalError, SparseCategoryWarning
from .loglik import SAFE_HESSIAN_BOUND, observed_nll, working_responses
from .thresholds import fit_all
from .unfolding import distances, unfold

MODEL_SCHEMA = "clmda-model/1"


@dataclass
class FitResult:
    config: ModelConfig
    U: np.ndarray
    V: np.ndarray
    thresholds: list
    theta_hat: np.ndarray
    nll_trace: list
    npar: int
    converged: bool
    start_index: int = 0
    B: np.ndarray = None
    var_names: tuple = ()
    cats: tuple = ()
    predictors: dict = None
    start_nlls: list = field(default_factory=list)
    inner_traces: list = field(default_factory=list, repr=False)

    @property
    def nll(self) -> float:
        return self.nll_trace[-1]

    @property
    def deviance(self) -> float:
        return 2.0 * self.nll

    @property
    def n_rows(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def aic(self) -> float:
        return self.deviance + 2.0 * self.npar

    @property
    def bic(self) -> float:
        return self.deviance + math.log(self.n_rows) * self.npar

    @property
    def n_iter(self) -> int:
        return len(self.nll_trace) - 1

    def summary(self) -> str:
        return (
            f"{self.config.model_name} S={self.config.dims}: deviance {self.deviance:.2f}  "
            f"npar {self.npar}  AIC {self.aic:.2f}  BIC {self.bic:.2f}  "
            f"iterations {self.n_iter}  converged {self.converged}"
        )

    def to_dict(self) -> dict:
        def mat(a):
            return None if a is None else [[float(v) for v in row] for row in np.asarray(a)]

        return {
            "schema": MODEL_SCHEMA,
            "version": __version__,
            "config": self.config.to_dict(),
            "var_names": list(self.var_names),
            "cats": [int(c) for c in self.cats],
            "U": mat(self.U),
            "V": mat(self.V),
            "B": mat(self.B),
            "thresholds": [[float(v) for v in m] for m in self.thresholds],
            "nll_trace": [float(v) for v in self.nll_trace],
            "deviance": self.deviance,
            "npar": int(self.npar),
            "aic": self.aic,
            "bic": self.bic,
            "converged": bool(self.converged),
            "start_index": int(self.start_index),
            "start_nlls": [float(v) for v in self.start_nlls],
            "predictors": self.predictors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        if d.get("schema") != MODEL_SCHEMA:
            raise InputError(f"not a model artifact (schema {d.get('schema')!r})")
        config = ModelConfig.from_dict(d["config"])
        U = np.asarray(d["U"], dtype=float)
        V = np.asarray(d["V"], dtype=float)
        B = None if d.get("B") is None else np.asarray(d["B"], dtype=float)
        return cls(
            config=config,
            U=U,
            V=V,
            B=B,
            thresholds=[np.asarray(m, dtype=float) for m in d["thresholds"]],
            theta_hat=structural(U, V, config.family),
            nll_trace=list(d["nll_trace"]),
            npar=int(d["npar"]),
            converged=bool(d["converged"]),
            start_index=int(d.get("start_index", 0)),
            var_names=tuple(d["var_names"]),
            cats=tuple(d["cats"]),
            predictors=d.get("predictors"),
            start_nlls=list(d.get("start_nlls", [])),
        )

    def save(self, path) -> None:
        atomic_write(path, json.dumps(self.to_dict(), indent=1) + "\n")


def load_model(path) -> FitResult:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    return FitResult.from_dict(d)


def structural(U, V, family: str) -> np.ndarray:
    """theta = U V' (dominance) or -d(u_i, v_r) (proximity)."""
    if family == "dominance":
        return np.asarray(U) @ np.asarray(V).T
    return -distances(U, V)


def npar(family, restricted, N, R, P, S, cats) -> int:
    """Number of free parameters: thresholds plus the structural part."""
    n = sum(int(c) - 1 for c in cats)
    rows = P if restricted else N
    if family == "dominance":
        return n + (rows + R - S) * S
    return n + (rows + R) * S - S * (S - 1) // 2


def _ca_start(codes, cats, S, rng):
    """Correspondence analysis of the indicator-coded responses.

    Rows get their principal coordinates; each variable point is the
    centroid of the rows in its highest category, where the distance model
    puts the rows closest to it.
    """
    n, R = codes.shape
    offsets = np.concatenate(([0], np.cumsum(cats)[:-1]))
    Z = np.zeros((n, int(np.sum(cats))))
    Z[np.arange(n)[:, None], offsets + codes - 1] = 1.0
    P = Z / Z.sum()
    r = P.sum(axis=1)
    c = P.sum(axis=0)
    Sm = (P - np.outer(r, c)) / np.sqrt(np.outer(r, c))
    u, sv, _ = np.linalg.svd(Sm, full_matrices=False)
    k = min(S, len(sv))
    F = u[:, :k] * sv[:k] / np.sqrt(r)[:, None]
    if k < S:
        F = np.column_stack([F, rng.uniform(-0.1, 0.1, (n, S - k))])
    G = np.vstack([F[codes[:, j] == cats[j]].mean(axis=0) for j in range(R)])
    rms = np.sqrt(np.mean(distances(F, G) ** 2))
    scale = 1.0 / rms if rms > 0 else 1.0
    return F * scale, G * scale


def _start(k, codes, cats, config, X, inv_sqrt, rng):
    n, R = codes.shape
    S = config.dims
    if k == 0:
        if config.family == "dominance":
            Zc = codes - codes.mean(axis=0)
            if config.restricted:
                p = rrr_update(Zc, X, S, inv_sqrt)
            else:
                p = pca_update(Zc, S)
            return p.U, p.V, p.B
        U, V = _ca_start(codes, np.asarray(cats), S, rng)
        if config.restricted:
            B = np.linalg.lstsq(X, U, rcond=None)[0]
            return X @ B, V, B
        return U, V, None
    V = rng.uniform(-1, 1, (R, S))
    if config.restricted:
        B = rng.uniform(-1, 1, (X.shape[1], S))
        return X @ B, V, B
    return rng.uniform(-1, 1, (n, S)), V, None


def _step(codes, cats, config, X, inv_sqrt, theta, U, V, B, m, bound):
    family = config.family
    lam = working_responses(theta, codes, m, bound)
    st = None
    if family == "dominance":
        p = rrr_update(lam, X, config.dims, inv_sqrt) if config.restricted else pca_update(lam, config.dims)
        U, V, B = p.U, p.V, p.B
    else:
        U, V, B_new, st = unfold(
            -lam, U, V, X if config.restricted else None,
            max_inner=config.max_inner, tol=config.tol_inner,
        )
        if B_new is not None:
            B = B_new
    theta = structural(U, V, family)
    m, _ = fit_all(codes, theta, cats, init=m)
    nll = observed_nll(theta, m, codes)
    if not np.isfinite(nll):
        raise NumericalError("non-finite negative log-likelihood")
    return dict(U=U, V=V, B=B, m=m, theta=theta, nll=nll, stress=st)


def _run(codes, cats, config, X, inv_sqrt, U, V, B, record_inner):
    theta = structural(U, V, config.family)
    m, _ = fit_all(codes, theta, cats)
    trace = [observed_nll(theta, m, codes)]
    inner = []
    converged = False
    state = dict(U=U, V=V, B=B, m=m, theta=theta)
    for _ in range(config.max_outer):
        args = (codes, cats, config, X, inv_sqrt, state["theta"], state["U"], state["V"], state["B"], state["m"])
        prev = trace[-1]
        new = _step(*args, config.hessian_bound)
        if new["nll"] > prev and config.hessian_bound < SAFE_HESSIAN_BOUND:
            # the smaller curvature constant overshot; redo with the valid bound
            new = _step(*args, SAFE_HESSIAN_BOUND)
        state = new
        if record_inner and new["stress"] is not None:
            inner.append(new["stress"])
        trace.append(new["nll"])
        if prev - new["nll"] < config.tol_outer * abs(prev):
            converged = True
            break
    U, V = state["U"], state["V"]
    if config.family == "proximity" and not config.restricted:
        centre = U.mean(axis=0)
        U = U - centre
        V = V - centre
    return dict(U=U, V=V, B=state["B"], m=state["m"], theta=state["theta"], trace=trace, converged=converged, inner=inner)


def _predictor_info(X: PredictorMatrix):
    if X is None:
        return None
    vals = X.values
    return {
        "names": list(X.col_names),
        "meta": [dict(m) for m in X.col_meta],
        "min": [float(v) for v in vals.min(axis=0)],
        "max": [float(v) for v in vals.max(axis=0)],
    }


def fit(ds: OrdinalDataset, config: ModelConfig, X=None, n_jobs=1, record_inner=False) -> FitResult:
    """Fit one model by EMM from ``config.n_starts`` starts; keep the lowest NLL.

    Start 0 is a rational start (SVD of the centred codes for dominance
    models, correspondence analysis for distance models); further starts
    draw coordinates uniformly on (-1, 1) from a generator keyed by
    (seed, start index).
    """
    if not isinstance(ds, OrdinalDataset):
        ds = OrdinalDataset(ds)
    if X is not None and not isinstance(X, PredictorMatrix):
        Xa = np.asarray(X, dtype=float)
        X = PredictorMatrix(Xa if Xa.ndim == 2 else Xa[:, None], [f"X{j + 1}" for j in range(Xa.reshape(len(Xa), -1).shape[1])])
    if config.restricted and X is None:
        raise InputError(f"{config.model_name} requires predictors")
    if not config.restricted:
        X = None
    if X is not None and X.values.shape[0] != ds.n_rows:
        raise InputError(f"predictors have {X.values.shape[0]} rows, responses {ds.n_rows}")
    config.check_data(ds.n_rows, ds.n_vars, None if X is None else X.n_cols)
    check_complete(ds)
    for w in validate(ds).warnings:
        warnings.warn(w, SparseCategoryWarning, stacklevel=2)

    codes = np.asarray(ds.codes)
    Xv = None if X is None else np.asarray(X.values)
    inv_sqrt = inverse_sqrt(Xv, X.col_names) if (Xv is not None and config.family == "dominance") else None
    if Xv is not None and config.family == "proximity":
        inverse_sqrt(Xv, X.col_names)  # full column rank check

    def job(k):
        rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), k]))
        try:
            U, V, B = _start(k, codes, ds.cats, config, Xv, inv_sqrt, rng)
            return k, _run(codes, ds.cats, config, Xv, inv_sqrt, U, V, B, record_inner), None
        except NumericalError as exc:
            return k, None, f"start {k}: {exc}"

    if n_jobs == 1 or config.n_starts == 1:
        outcomes = [job(k) for k in range(config.n_starts)]
    else:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=n_jobs)(delayed(job)(k) for k in range(config.n_starts))
    ok = [(o[1]["trace"][-1], o[0], o[1]) for o in outcomes if o[1] is not None]
    if not ok:
        raise FitFailure("all starts failed", [o[2] for o in outcomes])
    ok.sort(key=lambda t: (t[0], t[1]))
    _, k, best = ok[0]
    start_nlls = [float("nan")] * config.n_starts
    for nll, kk, _ in ok:
        start_nlls[kk] = nll
    P = 0 if X is None else X.n_cols
    return FitResult(
        config=config,
        U=best["U"],
        V=best["V"],
        B=best["B"],
        thresholds=best["m"],
        theta_hat=structural(best["U"], best["V"], config.family),
        nll_trace=best["trace"],
        npar=npar(config.family, config.restricted, ds.n_rows, ds.n_vars, P, config.dims, ds.cats),
        converged=best["converged"],
        start_index=k,
        var_names=ds.var_names,
        cats=ds.cats,
        predictors=_predictor_info(X),
        start_nlls=start_nlls,
        inner_traces=best["inner"],
    )


SCAN_COLUMNS = ("dims", "deviance", "npar", "aic", "bic")


def _flag_minima(rows):
    if rows:
        ia = min(range(len(rows)), key=lambda i: rows[i]["aic"])
        ib = min(range(len(rows)), key=lambda i: rows[i]["bic"])
        for i, row in enumerate(rows):
            row["aic_min"] = i == ia
            row["bic_min"] = i == ib
    return rows


def dimension_scan(ds, base_config: ModelConfig, S_range, X=None, n_jobs=1):
    """One fit per dimensionality; rows sorted by S with AIC/BIC minima flagged."""
    S_range = sorted(set(int(s) for s in S_range))
    if not S_range:
        raise InputError("empty dimension range")
    rows = []
    for S in S_range:
        res = fit(ds, _with_dims(base_config, S), X, n_jobs=n_jobs)
        rows.append({"dims": S, "deviance": res.deviance, "npar": res.npar, "aic": res.aic, "bic": res.bic})
    return _flag_minima(rows)


def _with_dims(config: ModelConfig, S: int) -> ModelConfig:
    d = config.to_dict()
    d["dims"] = S
    return ModelConfig.from_dict(d)


def predictor_drop_scan(ds, config: ModelConfig, X: PredictorMatrix, groups, n_jobs=1):
    """Refit with each named group of predictor columns removed."""
    if not config.restricted:
        raise InputError("predictor scans need a restricted model")
    rows = []
    for name, cols in groups.items():
        reduced = X.drop(list(cols))
        if reduced.n_cols == 0:
            raise EmptyDesign(f"dropping {name!r} removes every predictor")
        res = fit(ds, config, reduced, n_jobs=n_jobs)
        rows.append({
            "model": name, "dims": config.dims, "deviance": res.deviance,
            "npar": res.npar, "aic": res.aic, "bic": res.bic,
        })
    return _flag_minima(rows)
