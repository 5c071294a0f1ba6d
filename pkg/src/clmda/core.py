"""Data model, file ingestion, validation and predictor encoding."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import (
    DegenerateColumn,
    DimensionError,
    DomainError,
    EmptyInput,
    InputError,
    IoError,
    ParseError,
    ValidationError,
)

#: categories observed fewer times than this trigger a "sparse category" warning
SPARSE_FREQUENCY = 5

FAMILIES = ("dominance", "proximity")


@dataclass(frozen=True)
class OrdinalDataset:
    """N x R matrix of integer category codes (1..C_r per column).

    ``cats`` defaults to the column maxima.  The code matrix is stored
    read-only so a dataset can be shared between concurrent fits.
    """

    codes: np.ndarray
    cats: tuple = None
    var_names: tuple = None

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 2:
            raise DimensionError(f"codes must be 2-D, got shape {codes.shape}")
        if codes.size == 0:
            raise EmptyInput("no observations")
        if not np.issubdtype(codes.dtype, np.integer):
            if not np.all(np.isfinite(codes)) or np.any(codes != np.round(codes)):
                raise DomainError("codes must be integers")
        codes = np.array(codes, dtype=np.int64)
        n, r = codes.shape
        if n < 2:
            raise DimensionError("need at least two rows")
        if codes.min() < 1:
            i, j = np.argwhere(codes < 1)[0]
            raise DomainError(f"code {codes[i, j]} < 1 at row {i + 1}, column {j + 1}")
        cats = self.cats
        if cats is None:
            cats = codes.max(axis=0)
        cats = tuple(int(c) for c in cats)
        if len(cats) != r:
            raise DimensionError(f"{len(cats)} category counts for {r} variables")
        if min(cats) < 2:
            raise DomainError("every variable needs at least two categories")
        over = codes > np.asarray(cats)
        if over.any():
            i, j = np.argwhere(over)[0]
            raise DomainError(
                f"code {codes[i, j]} exceeds declared {cats[j]} categories "
                f"at row {i + 1}, column {j + 1}"
            )
        names = self.var_names
        if names is None:
            names = tuple(f"Y{j + 1}" for j in range(r))
        names = tuple(str(s) for s in names)
        if len(names) != r:
            raise DimensionError(f"{len(names)} names for {r} variables")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "cats", cats)
        object.__setattr__(self, "var_names", names)

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def n_vars(self) -> int:
        return self.codes.shape[1]

    def frequencies(self):
        return [
            np.bincount(self.codes[:, j], minlength=self.cats[j] + 1)[1:]
            for j in range(self.n_vars)
        ]

    def take(self, rows) -> "OrdinalDataset":
        return OrdinalDataset(self.codes[rows], self.cats, self.var_names)


@dataclass(frozen=True)
class ValidationReport:
    n_rows: int
    n_vars: int
    frequencies: dict
    gaps: dict
    warnings: list

    @property
    def ok(self) -> bool:
        return not self.gaps

    def format(self) -> str:
        lines = [f"N = {self.n_rows}, R = {self.n_vars}"]
        for name, freq in self.frequencies.items():
            lines.append(f"  {name}: " + " ".join(str(f) for f in freq))
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate(ds: OrdinalDataset) -> ValidationReport:
    """Category frequencies, unobserved categories and sparse-category warnings."""
    freqs, gaps, warnings = {}, {}, []
    for name, freq in zip(ds.var_names, ds.frequencies()):
        freqs[name] = [int(f) for f in freq]
        missing = [c + 1 for c, f in enumerate(freq) if f == 0]
        if missing:
            gaps[name] = missing
            for c in missing:
                warnings.append(f"{name}: category {c} unobserved")
        for c, f in enumerate(freq):
            if 0 < f < SPARSE_FREQUENCY:
                warnings.append(f"{name}: sparse category {c + 1} (frequency {f})")
    return ValidationReport(ds.n_rows, ds.n_vars, freqs, gaps, warnings)


def check_complete(ds: OrdinalDataset) -> None:
    """Raise ValidationError if any declared category is never observed."""
    report = validate(ds)
    if report.gaps:
        name, missing = next(iter(report.gaps.items()))
        raise ValidationError(
            f"{name}: category {missing[0]} unobserved (use `recode` to collapse gaps)"
        )


def recode(ds: OrdinalDataset) -> OrdinalDataset:
    """Collapse unobserved categories so each column uses 1..k without gaps."""
    out = np.empty_like(ds.codes)
    cats = []
    for j in range(ds.n_vars):
        levels, inv = np.unique(ds.codes[:, j], return_inverse=True)
        out[:, j] = inv + 1
        cats.append(max(len(levels), 2))
    return OrdinalDataset(out, tuple(cats), ds.var_names)


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write(path, text: str) -> None:
    try:
        _atomic_write(path, text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _read_sidecar(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["cats"]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: expected a JSON object with a 'cats' list ({exc})") from exc


def load_ordinal(path, cats=None, sidecar=None, strict=True) -> OrdinalDataset:
    """Read a wide CSV of integer codes (header row of variable names).

    ``cats`` or a JSON sidecar ``{"cats": [...]}`` override the observed
    maxima.  With ``strict`` the dataset must have no unobserved category.
    """
    path = Path(path)
    rows = _read_csv(path)
    if len(rows) < 2:
        raise EmptyInput(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    body = np.empty((len(rows) - 1, len(header)), dtype=np.int64)
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ParseError(i, len(row), "<wrong number of cells>")
        for j, cell in enumerate(row):
            try:
                body[i - 1, j] = int(cell.strip())
            except ValueError:
                raise ParseError(i, j + 1, cell) from None
    if sidecar is not None and cats is None:
        cats = _read_sidecar(sidecar)
    ds = OrdinalDataset(body, cats, header)
    if strict:
        check_complete(ds)
    return ds


def save_ordinal(ds: OrdinalDataset, path, sidecar=None) -> None:
    lines = [",".join(ds.var_names)]
    lines += [",".join(str(int(v)) for v in row) for row in ds.codes]
    atomic_write(path, "\n".join(lines) + "\n")
    if sidecar is not None:
        atomic_write(sidecar, json.dumps({"cats": list(ds.cats)}))


@dataclass(frozen=True)
class PredictorMatrix:
    """Encoded N x P predictor matrix without intercept.

    ``col_meta`` holds one dict per column with keys ``kind`` ("numeric"
    or "dummy"), ``source`` (original variable) and, for dummies,
    ``level`` and ``reference``.
    """

    values: np.ndarray
    col_names: tuple
    col_meta: tuple = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DimensionError("predictor values must be 2-D")
        if not np.all(np.isfinite(values)):
            raise DomainError("predictors must be finite (missing values are not supported)")
        names = tuple(str(c) for c in self.col_names)
        if len(names) != values.shape[1]:
            raise DimensionError(f"{len(names)} names for {values.shape[1]} columns")
        meta = self.col_meta
        if meta is None:
            meta = tuple({"kind": "numeric", "source": n} for n in names)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "col_names", names)
        object.__setattr__(self, "col_meta", tuple(dict(m) for m in meta))

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def drop(self, columns: Sequence[str]) -> "PredictorMatrix":
        unknown = set(columns) - set(self.col_names) - {m["source"] for m in self.col_meta}
        if unknown:
            raise InputError(f"unknown predictor columns: {sorted(unknown)}")
        keep = [
            j for j, (n, m) in enumerate(zip(self.col_names, self.col_meta))
            if n not in columns and m["source"] not in columns
        ]
        return PredictorMatrix(
            self.values[:, keep],
            [self.col_names[j] for j in keep],
            [self.col_meta[j] for j in keep],
        )


def encode_predictors(raw: Mapping[str, Sequence], types: Mapping[str, str]) -> PredictorMatrix:
    """Standardize numeric columns and dummy-code categorical ones.

    ``types`` maps each column to ``"numeric"`` or ``"categorical:<ref>"``;
    the reference level gets no dummy and sits at the origin.
    """
    columns, names, meta = [], [], []
    for name, kind in types.items():
        col = list(raw[name])
        if kind == "numeric":
            x = np.asarray(col, dtype=float)
            if not np.all(np.isfinite(x)):
                raise DomainError(f"{name}: missing or non-finite values")
            sd = x.std(ddof=1) if x.size > 1 else 0.0
            if not sd > 0:
                raise DegenerateColumn(f"{name}: constant numeric column")
            z = (x - x.mean()) / sd
            # second pass removes the O(eps) residual mean left by the first
            z = z - z.mean()
            z = z / z.std(ddof=1)
            columns.append(z)
            names.append(name)
            meta.append({"kind": "numeric", "source": name})
        elif kind.startswith("categorical"):
            _, _, ref = kind.partition(":")
            labels = [str(v).strip() for v in col]
            levels = sorted(set(labels))
            if len(levels) < 2:
                raise DegenerateColumn(f"{name}: single-level categorical")
            if not ref:
                ref = levels[0]
            if ref not in levels:
                raise InputError(f"{name}: reference level {ref!r} not observed")
            for level in levels:
                if level == ref:
                    continue
                columns.append(np.array([lab == level for lab in labels], dtype=float))
                names.append(f"{name}[{level}]")
                meta.append({"kind": "dummy", "source": name, "level": level, "reference": ref})
        else:
            raise InputError(f"{name}: unknown column type {kind!r}")
    if not columns:
        raise InputError("no predictor columns")
    return PredictorMatrix(np.column_stack(columns), names, meta)


def load_predictors(path) -> PredictorMatrix:
    """Read a predictor CSV: header row, a types row, then data rows.

    The types row holds ``numeric`` or ``categorical:<reference>`` per column.
    """
    rows = _read_csv(path)
    if len(rows) < 3:
        raise EmptyInput(f"{path}: need header, types line and data rows")
    header = [h.strip() for h in rows[0]]
    types = [t.strip() for t in rows[1]]
    if len(types) != len(header):
        raise InputError(f"{path}: types line has {len(types)} cells for {len(header)} columns")
    raw = {h: [] for h in header}
    for i, row in enumerate(rows[2:], start=1):
        if len(row) != len(header):
            raise ParseError(i, len(row), "<wrong number of cells>")
        for j, (h, cell) in enumerate(zip(header, row)):
            cell = cell.strip()
            if cell == "":
                raise ParseError(i, j + 1, cell)
            if types[j] == "numeric":
                try:
                    raw[h].append(float(cell))
                except ValueError:
                    raise ParseError(i, j + 1, cell) from None
            else:
                raw[h].append(cell)
    return encode_predictors(raw, dict(zip(header, types)))


@dataclass(frozen=True)
class ModelConfig:
    """Model family, dimensionality and iteration control for one fit.

    ``hessian_bound`` is the curvature constant of the quadratic majorizer.
    The default 0.25 takes long steps (working responses theta - 4 xi); any
    step that raises the NLL is redone with 0.5, which bounds the true
    curvature, so descent is kept either way.
    ``n_starts=None`` means 1 for dominance and 10 for proximity models.
    """

    family: str = "dominance"
    restricted: bool = False
    dims: int = 2
    tol_outer: float = 1e-6
    tol_inner: float = 1e-8
    max_outer: int = 1000
    max_inner: int = 64
    n_starts: int = None
    seed: int = 0
    hessian_bound: float = 0.25

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if int(self.dims) < 1:
            raise DimensionError("dims must be >= 1")
        if not (self.tol_outer > 0 and self.tol_inner > 0):
            raise InputError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InputError("iteration caps must be >= 1")
        if self.n_starts is not None and self.n_starts < 1:
            raise InputError("n_starts must be >= 1")
        if not self.hessian_bound > 0:
            raise InputError("hessian_bound must be positive")
        if self.n_starts is None:
            object.__setattr__(self, "n_starts", 1 if self.family == "dominance" else 10)

    @property
    def model_name(self) -> str:
        return {
            ("dominance", False): "clpca",
            ("dominance", True): "clrrr",
            ("proximity", False): "clmdu",
            ("proximity", True): "clrmdu",
        }[(self.family, self.restricted)]

    @classmethod
    def for_model(cls, name: str, **kwargs) -> "ModelConfig":
        table = {
            "clpca": ("dominance", False),
            "clrrr": ("dominance", True),
            "clmdu": ("proximity", False),
            "clrmdu": ("proximity", True),
        }
        try:
            family, restricted = table[name.lower()]
        except KeyError:
            raise InputError(f"unknown model {name!r}") from None
        return cls(family=family, restricted=restricted, **kwargs)

    def check_data(self, n_rows: int, n_vars: int, n_pred: int = None) -> None:
        if self.family == "dominance" and self.dims > min(n_rows, n_vars):
            raise DimensionError(
                f"dims={self.dims} exceeds min(N, R) = {min(n_rows, n_vars)}"
            )
        if self.restricted:
            if n_pred is None:
                raise InputError(f"{self.model_name} requires predictors")
            if self.family == "dominance" and self.dims > min(n_pred, n_vars):
                raise DimensionError(
                    f"dims={self.dims} exceeds min(P, R) = {min(n_pred, n_vars)}"
                )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "restricted": self.restricted,
            "model": self.model_name,
            "dims": int(self.dims),
            "tol_outer": self.tol_outer,
            "tol_inner": self.tol_inner,
            "max_outer": int(self.max_outer),
            "max_inner": int(self.max_inner),
            "n_starts": int(self.n_starts),
            "seed": int(self.seed),
            "hessian_bound": self.hessian_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = {k: v for k, v in d.items() if k != "model"}
        return cls(**d)
