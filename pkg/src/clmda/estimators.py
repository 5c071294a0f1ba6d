"""scikit-learn style estimators wrapping the EMM driver.

``CLPCA`` and ``CLMDU`` are unsupervised: ``fit(Y)`` takes an N x R matrix
of category codes 1..C_r.  ``CLRRR`` and ``CLRMDU`` regress the responses
on predictors: ``fit(X, Y)``, then ``predict`` / ``predict_proba`` for new
predictor rows.

Examples
--------
>>> import numpy as np
>>> from clmda.estimators import CLRRR
>>> rng = np.random.default_rng(0)
>>> X = rng.standard_normal((200, 3))
>>> Y = 1 + (X @ rng.standard_normal((3, 4)) + rng.logistic(size=(200, 4)) > 0)
>>> est = CLRRR(n_components=1).fit(X, Y)
>>> est.predict(X[:2]).shape
(2, 4)
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import ModelConfig, OrdinalDataset, PredictorMatrix
from .driver import fit as _fit
from .driver import structural
from .exceptions import InputError
from .loglik import category_probs, observed_nll

__all__ = ["CLPCA", "CLRRR", "CLMDU", "CLRMDU"]


def _check_codes(Y):
    Y = check_array(Y, dtype=None, ensure_all_finite=True)
    Yf = np.asarray(Y, dtype=float)
    if np.any(Yf != np.round(Yf)):
        raise InputError("responses must be integer category codes")
    return Yf.astype(np.int64)


class _CLBase(BaseEstimator):
    _family = "dominance"
    _restricted = False

    def __init__(
        self,
        n_components=2,
        n_starts=None,
        tol=1e-6,
        tol_inner=1e-8,
        max_iter=1000,
        max_inner=64,
        hessian_bound=0.25,
        random_state=0,
        n_jobs=1,
    ):
        self.n_components = n_components
        self.n_starts = n_starts
        self.tol = tol
        self.tol_inner = tol_inner
        self.max_iter = max_iter
        self.max_inner = max_inner
        self.hessian_bound = hessian_bound
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        seed = self.random_state
        if seed is None:
            seed = int(np.random.SeedSequence().generate_state(1)[0])
        elif isinstance(seed, np.random.RandomState):
            seed = int(seed.randint(2**31 - 1))
        return ModelConfig(
            family=self._family,
            restricted=self._restricted,
            dims=int(self.n_components),
            tol_outer=self.tol,
            tol_inner=self.tol_inner,
            max_outer=int(self.max_iter),
            max_inner=int(self.max_inner),
            n_starts=self.n_starts,
            seed=int(seed),
            hessian_bound=self.hessian_bound,
        )

    def _store(self, res):
        self.fit_result_ = res
        self.components_ = res.V
        self.scores_ = res.U
        self.thresholds_ = [np.asarray(m) for m in res.thresholds]
        self.theta_ = res.theta_hat
        self.deviance_ = res.deviance
        self.aic_ = res.aic
        self.bic_ = res.bic
        self.n_parameters_ = res.npar
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_categories_ = tuple(res.cats)
        return self

    def _proba_from_theta(self, theta):
        return [category_probs(theta[:, r], m) for r, m in enumerate(self.thresholds_)]


class _Unsupervised(TransformerMixin, _CLBase):
    def fit(self, Y, y=None):
        """Fit row scores, variable coordinates and thresholds to the codes ``Y``."""
        codes = _check_codes(Y)
        self._train_codes = codes
        return self._store(_fit(OrdinalDataset(codes), self._config(), n_jobs=self.n_jobs))

    def fit_transform(self, Y, y=None):
        return self.fit(Y).scores_

    def transform(self, Y):
        """Row scores for response patterns ``Y``.

        Rows are scored by maximum likelihood with the variable
        coordinates and thresholds held fixed; rows identical to a
        training row get that row's fitted score.
        """
        check_is_fitted(self, "components_")
        codes = _check_codes(Y)
        if codes.shape[1] != self.components_.shape[0]:
            raise InputError(f"expected {self.components_.shape[0]} response columns, got {codes.shape[1]}")
        train = self._train_codes
        out = np.empty((codes.shape[0], self.components_.shape[1]))
        for i, row in enumerate(codes):
            hamming = (train != row).sum(axis=1)
            j = int(np.argmin(hamming))
            if hamming[j] == 0:
                out[i] = self.scores_[j]
                continue
            out[i] = self._score_row(row, self.scores_[j])
        return out

    def _score_row(self, row, start):
        V, family, m = self.components_, self._family, self.thresholds_
        codes = row[None, :]

        def nll(u):
            return observed_nll(structural(u[None, :], V, family), m, codes)

        return minimize(nll, start, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-10}).x

    def score(self, Y, y=None):
        """Mean log-likelihood per row, each row at its fitted or re-estimated score."""
        U = self.transform(Y)
        codes = _check_codes(Y)
        return -observed_nll(structural(U, self.components_, self._family), self.thresholds_, codes) / len(codes)


class _Supervised(TransformerMixin, _CLBase):
    def fit(self, X, Y):
        """Fit the responses ``Y`` (codes) with row coordinates restricted to ``X B``."""
        X = check_array(X, dtype=float)
        codes = _check_codes(Y)
        if X.shape[0] != codes.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows, Y has {codes.shape[0]}")
        names = getattr(self, "feature_names_in_", None)
        P = PredictorMatrix(X, list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])])
        self.n_features_in_ = X.shape[1]
        self._store(_fit(OrdinalDataset(codes), self._config(), P, n_jobs=self.n_jobs))
        self.coef_ = self.fit_result_.B
        return self

    def transform(self, X):
        """Row coordinates X B."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} predictors, got {X.shape[1]}")
        return X @ self.coef_

    def decision_function(self, X):
        """Structural part theta for new predictor rows (N x R)."""
        return structural(self.transform(X), self.components_, self._family)

    def predict_proba(self, X):
        """List with one N x C_r matrix of category probabilities per response variable."""
        return self._proba_from_theta(self.decision_function(X))

    def predict(self, X):
        """Most probable category of every response variable (N x R, codes 1..C_r)."""
        return np.column_stack([p.argmax(axis=1) + 1 for p in self.predict_proba(X)])

    def score(self, X, Y):
        """Mean log-likelihood per row."""
        codes = _check_codes(Y)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return -observed_nll(self.decision_function(X), self.thresholds_, codes) / len(codes)


class CLPCA(_Unsupervised):
    """Cumulative logistic PCA: theta = U V'."""

    _family = "dominance"


class CLMDU(_Unsupervised):
    """Cumulative logistic unfolding: theta = -d(u_i, v_r)."""

    _family = "proximity"


class CLRRR(_Supervised):
    """Cumulative logistic reduced-rank regression: theta = X B V'."""

    _family = "dominance"
    _restricted = True


class CLRMDU(_Supervised):
    """Cumulative logistic restricted unfolding: theta = -d(x_i' B, v_r)."""

    _family = "proximity"
    _restricted = True
