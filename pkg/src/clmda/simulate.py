"""Data generation from known parameters and the parameter-recovery study.

Predictors are drawn from N(0, Sigma), row coordinates are U = X B, and
responses are sampled independently per variable from the cumulative
logit model with shared thresholds.  Every replication draws from its own
Philox stream keyed by (seed, N, R, C, family, replication), so results do
not depend on the order in which conditions are run.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import ModelConfig, OrdinalDataset, PredictorMatrix, atomic_write
from .driver import fit, structural
from .exceptions import CholeskyError, ClmdaError, DegenerateFit, DimensionError, InputError
from .loglik import logistic_cdf

POPULATION_SCHEMA = "clmda-population/1"
STUDY_COLUMNS = ("N", "R", "C", "family", "rep", "delta", "seconds", "converged")
_FAMILY_CODE = {"dominance": 0, "proximity": 1}


def _increasing(m):
    m = np.asarray(m, dtype=float)
    return m.ndim == 1 and m.size >= 1 and bool(np.all(np.diff(m) > 0)) and bool(np.all(np.isfinite(m)))


@dataclass
class Population:
    """True parameters: B (P x S), V (R x S), Sigma (P x P), shared thresholds.

    ``threshold_sets`` optionally maps a number of categories C to the
    threshold vector used when a study asks for C categories.
    """

    B: np.ndarray
    V: np.ndarray
    Sigma: np.ndarray
    thresholds: np.ndarray
    family: str = "dominance"
    threshold_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.threshold_sets = {int(k): np.asarray(v, dtype=float) for k, v in self.threshold_sets.items()}
        if self.family not in _FAMILY_CODE:
            raise InputError(f"unknown family {self.family!r}")
        P, S = self.B.shape
        if self.V.shape[1] != S:
            raise DimensionError(f"V has {self.V.shape[1]} columns, B has {S}")
        if self.Sigma.shape != (P, P):
            raise DimensionError(f"Sigma must be {P} x {P}")
        if not np.allclose(self.Sigma, self.Sigma.T):
            raise CholeskyError("Sigma is not symmetric")
        for m in [self.thresholds, *self.threshold_sets.values()]:
            if not _increasing(m):
                raise InputError("thresholds must be finite and strictly increasing")
        for C, m in self.threshold_sets.items():
            if m.size != C - 1:
                raise InputError(f"threshold set for C={C} has {m.size} values")

    @property
    def dims(self) -> int:
        return self.B.shape[1]

    def thresholds_for(self, C: int) -> np.ndarray:
        if C in self.threshold_sets:
            return self.threshold_sets[C]
        if self.thresholds.size == C - 1:
            return self.thresholds
        raise InputError(f"population has no thresholds for C={C}")

    def with_family(self, family: str) -> "Population":
        return Population(self.B, self.V, self.Sigma, self.thresholds, family, self.threshold_sets)

    def to_dict(self) -> dict:
        return {
            "schema": POPULATION_SCHEMA,
            "family": self.family,
            "B": self.B.tolist(),
            "V": self.V.tolist(),
            "Sigma": self.Sigma.tolist(),
            "thresholds": self.thresholds.tolist(),
            "threshold_sets": {str(k): v.tolist() for k, v in sorted(self.threshold_sets.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Population":
        if d.get("schema", POPULATION_SCHEMA) != POPULATION_SCHEMA:
            raise InputError(f"not a population file (schema {d.get('schema')!r})")
        try:
            return cls(
                B=d["B"], V=d["V"], Sigma=d["Sigma"], thresholds=d["thresholds"],
                family=d.get("family", "dominance"), threshold_sets=d.get("threshold_sets", {}),
            )
        except KeyError as exc:
            raise InputError(f"population file lacks {exc}") from None


# predictor correlations, regression weights and variable coordinates of the
# simulation population; V rows 5-8 are rows 1-4 turned by -45 radians, rounded
REFERENCE_SIGMA = np.array([
    [1.00, 0.01, -0.02, 0.01, 0.04],
    [0.01, 1.00, -0.59, 0.19, 0.16],
    [-0.02, -0.59, 1.00, -0.00, -0.00],
    [0.01, 0.19, -0.00, 1.00, 0.25],
    [0.04, 0.16, -0.00, 0.25, 1.00],
])
REFERENCE_B = np.array([
    [-0.16, 0.19],
    [-0.37, 0.04],
    [-0.17, 0.19],
    [-0.40, -0.17],
    [-0.28, 0.12],
])
REFERENCE_V = np.array([
    [0.44, -0.45],
    [0.34, 2.35],
    [-1.68, 0.05],
    [-1.55, 0.08],
    [-0.16, -0.61],
    [2.18, 0.94],
    [-0.84, 1.45],
    [-0.74, 1.36],
])
REFERENCE_THRESHOLDS = {3: np.array([-1.0, -0.5]), 5: np.array([-2.0, -1.5, -1.0, -0.5])}


def reference_population(family="dominance") -> Population:
    """The simulation population: 5 correlated predictors, S = 2, up to 8 variables."""
    return Population(
        REFERENCE_B.copy(), REFERENCE_V.copy(), REFERENCE_SIGMA.copy(),
        REFERENCE_THRESHOLDS[3].copy(), family, {k: v.copy() for k, v in REFERENCE_THRESHOLDS.items()},
    )


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def extend_V_by_rotation(V, angle=math.pi / 4) -> np.ndarray:
    """Stack V on V G' with G the counterclockwise 2-D rotation by ``angle`` (radians)."""
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2:
        raise DimensionError("rotation extension needs S = 2")
    return np.vstack([V, V @ rotation(angle).T])


def _cholesky(Sigma):
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise CholeskyError("Sigma is not positive definite") from None


def gen_dataset(pop: Population, N: int, rng, R=None, C=None):
    """Draw (predictors, responses, true theta) for N rows.

    ``R`` keeps the first R rows of V and ``C`` picks the threshold set;
    by default all of V and ``pop.thresholds`` are used.
    """
    if N < 1:
        raise InputError("N must be at least 1")
    L = _cholesky(pop.Sigma)
    V = pop.V if R is None else pop.V[:R]
    if R is not None and not 1 <= R <= pop.V.shape[0]:
        raise InputError(f"R={R} outside 1..{pop.V.shape[0]}")
    m = pop.thresholds if C is None else pop.thresholds_for(C)
    P = pop.B.shape[0]
    X = rng.standard_normal((N, P)) @ L.T
    theta = structural(X @ pop.B, V, pop.family)
    # y = 1 + #{c : u > F(m_c - theta)} is the inverse-CDF draw
    u = rng.random(theta.shape)
    cum = logistic_cdf(m[None, None, :] - theta[..., None])
    codes = 1 + (u[..., None] > cum).sum(axis=-1)
    Xm = PredictorMatrix(X, [f"X{j + 1}" for j in range(P)])
    ds = OrdinalDataset(codes, cats=[m.size + 1] * V.shape[0], var_names=[f"Y{r + 1}" for r in range(V.shape[0])])
    return Xm, ds, theta


def recovery_delta(theta_true, theta_hat) -> float:
    """sqrt(sum (theta - theta_hat)^2 / sum theta_hat^2); the fitted values normalise."""
    t = np.asarray(theta_true, dtype=float)
    h = np.asarray(theta_hat, dtype=float)
    if t.shape != h.shape:
        raise DimensionError(f"shapes differ: {t.shape} vs {h.shape}")
    den = float(np.sum(h * h))
    if not den > 0:
        raise DegenerateFit("fitted structural part is identically zero")
    return math.sqrt(float(np.sum((t - h) ** 2)) / den)


@dataclass
class StudyDesign:
    """Factorial design of the recovery study and the fitting controls.

    ``families=None`` runs the population's own family.  With
    ``record_time=False`` the seconds column is left empty, which makes
    the CSV reproducible byte for byte.
    """

    N_levels: tuple = (250, 500, 1000)
    C_levels: tuple = (3, 5)
    R_levels: tuple = (4, 8)
    replications: int = 200
    seed: int = 0
    families: tuple = None
    n_starts: int = 1
    tol_outer: float = 1e-6
    max_outer: int = 1000
    max_inner: int = 64
    record_time: bool = False

    def __post_init__(self):
        for name in ("N_levels", "C_levels", "R_levels"):
            levels = tuple(int(v) for v in getattr(self, name))
            if not levels:
                raise InputError(f"{name} must not be empty")
            setattr(self, name, levels)
        if int(self.replications) < 1:
            raise InputError("replications must be at least 1")
        self.replications = int(self.replications)
        if any(n < 1 for n in self.N_levels) or any(c < 2 for c in self.C_levels) or any(r < 1 for r in self.R_levels):
            raise InputError("levels must be positive (C at least 2)")
        if self.families is not None:
            self.families = tuple(self.families)
            bad = set(self.families) - set(_FAMILY_CODE)
            if bad or not self.families:
                raise InputError(f"unknown families {sorted(bad)}")

    def conditions(self, family):
        return [(N, R, C) for N in self.N_levels for R in self.R_levels for C in self.C_levels]

    def to_dict(self) -> dict:
        return {
            "N_levels": list(self.N_levels), "C_levels": list(self.C_levels), "R_levels": list(self.R_levels),
            "replications": self.replications, "seed": int(self.seed),
            "families": None if self.families is None else list(self.families),
            "n_starts": int(self.n_starts), "tol_outer": self.tol_outer,
            "max_outer": int(self.max_outer), "max_inner": int(self.max_inner),
            "record_time": bool(self.record_time),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StudyDesign":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown design fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StudyRow:
    N: int
    R: int
    C: int
    family: str
    rep: int
    delta: float
    seconds: float
    converged: bool
    error: str = None

    @property
    def key(self):
        return (_FAMILY_CODE[self.family], self.N, self.R, self.C, self.rep)


def replication_rng(seed, N, R, C, family, rep) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(N), int(R), int(C), _FAMILY_CODE[family], int(rep)])
    return np.random.Generator(np.random.Philox(ss))


def run_replication(pop: Population, design: StudyDesign, N, R, C, family, rep) -> StudyRow:
    """Generate one dataset, fit the restricted model of ``family`` and score it."""
    rng = replication_rng(design.seed, N, R, C, family, rep)
    fit_seed = int(rng.integers(2**31 - 1))
    t0 = time.perf_counter()
    try:
        X, ds, theta = gen_dataset(pop.with_family(family), N, rng, R=R, C=C)
        config = ModelConfig(
            family=family, restricted=True, dims=pop.dims, n_starts=design.n_starts, seed=fit_seed,
            tol_outer=design.tol_outer, max_outer=design.max_outer, max_inner=design.max_inner,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(ds, config, X)
        delta = recovery_delta(theta, res.theta_hat)
        converged, error = res.converged, None
    except ClmdaError as exc:
        delta, converged, error = float("nan"), False, f"{type(exc).__name__}: {exc}"
    seconds = time.perf_counter() - t0 if design.record_time else float("nan")
    return StudyRow(N, R, C, family, rep, delta, seconds, converged, error)


def run_study(pop: Population, design: StudyDesign, n_jobs=1) -> list:
    """All replications of the design; rows sorted by (family, N, R, C, rep)."""
    families = design.families or (pop.family,)
    if max(design.R_levels) > pop.V.shape[0]:
        raise InputError(f"design needs R={max(design.R_levels)} but V has {pop.V.shape[0]} rows")
    for C in design.C_levels:
        pop.thresholds_for(C)
    _cholesky(pop.Sigma)
    jobs = [
        (N, R, C, fam, rep)
        for fam in families
        for (N, R, C) in design.conditions(fam)
        for rep in range(1, design.replications + 1)
    ]
    if n_jobs == 1:
        rows = [run_replication(pop, design, *job) for job in jobs]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(delayed(run_replication)(pop, design, *job) for job in jobs)
    return sorted(rows, key=lambda r: r.key)


def _num(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def study_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for r in rows:
        w.writerow([r.N, r.R, r.C, r.family, r.rep, _num(r.delta), _num(r.seconds), str(bool(r.converged)).lower()])
    return buf.getvalue()


def write_study(rows, path) -> None:
    atomic_write(path, study_csv(rows))


def summarize(rows) -> list:
    """Median delta per (family, N, R, C) over the successful replications."""
    groups = {}
    for r in rows:
        groups.setdefault((r.family, r.N, r.R, r.C), []).append(r)
    out = []
    for (fam, N, R, C), rs in sorted(groups.items(), key=lambda kv: (_FAMILY_CODE[kv[0][0]], *kv[0][1:])):
        d = np.array([r.delta for r in rs if math.isfinite(r.delta)])
        out.append({
            "family": fam, "N": N, "R": R, "C": C,
            "median_delta": float(np.median(d)) if d.size else float("nan"),
            "n_ok": int(d.size), "n_failed": len(rs) - int(d.size),
        })
    return out


def load_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {what} {path}: {exc}") from exc
