import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clmda.core import (
    ModelConfig,
    OrdinalDataset,
    PredictorMatrix,
    check_complete,
    encode_predictors,
    load_ordinal,
    load_predictors,
    recode,
    save_ordinal,
    validate,
)
from clmda.exceptions import (
    DegenerateColumn,
    DimensionError,
    DomainError,
    EmptyInput,
    InputError,
    IoError,
    ParseError,
    ValidationError,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_small_csv(tmp_path):
    p = write(tmp_path / "y.csv", "a,b\n1,1\n2,1\n2,2\n")
    ds = load_ordinal(p)
    assert (ds.n_rows, ds.n_vars) == (3, 2)
    assert ds.cats == (2, 2)
    assert ds.var_names == ("a", "b")
    np.testing.assert_array_equal(ds.codes, [[1, 1], [2, 1], [2, 2]])


def test_gap_is_rejected(tmp_path):
    p = write(tmp_path / "y.csv", "a,b\n1,1\n3,2\n1,2\n")
    with pytest.raises(ValidationError, match="category 2 unobserved"):
        load_ordinal(p)


def test_survey_shape_accepted():
    rng = np.random.default_rng(1)
    cats = (5, 8, 4, 4)
    codes = np.column_stack([rng.integers(1, c + 1, 1063) for c in cats])
    codes[:8, 1] = np.arange(1, 9)
    ds = OrdinalDataset(codes, cats=cats)
    check_complete(ds)
    assert (ds.n_rows, ds.n_vars, ds.cats) == (1063, 4, cats)


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_ordinal(write(tmp_path / "y.csv", "a,b\n1,1\n2,x\n"))
    assert (exc.value.row, exc.value.col) == (2, 2)
    with pytest.raises(ParseError):
        load_ordinal(write(tmp_path / "z.csv", "a\n1.5\n2\n"))
    with pytest.raises(DomainError):
        load_ordinal(write(tmp_path / "d.csv", "a\n0\n2\n1\n"))
    with pytest.raises(EmptyInput):
        load_ordinal(write(tmp_path / "e.csv", ""))


def test_sidecar_declares_categories(tmp_path):
    p = write(tmp_path / "y.csv", "a\n1\n2\n4\n3\n")
    side = write(tmp_path / "y.json", json.dumps({"cats": [5]}))
    with pytest.raises(ValidationError, match="category 5 unobserved"):
        load_ordinal(p, sidecar=side)
    ds = load_ordinal(p, sidecar=side, strict=False)
    assert ds.cats == (5,)
    assert "Y1: category 5 unobserved" not in validate(ds).warnings
    assert "a: category 5 unobserved" in validate(ds).warnings


def test_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    ds = OrdinalDataset(rng.integers(1, 5, (40, 3)), cats=(4, 4, 4), var_names=("x", "y", "z"))
    save_ordinal(ds, tmp_path / "o.csv", sidecar=tmp_path / "o.json")
    back = load_ordinal(tmp_path / "o.csv", sidecar=tmp_path / "o.json", strict=False)
    np.testing.assert_array_equal(back.codes, ds.codes)
    assert back.cats == ds.cats and back.var_names == ds.var_names


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_round_trip_property(tmp_path_factory, n, r, seed):
    rng = np.random.default_rng(seed)
    cats = tuple(int(c) for c in rng.integers(2, 7, r))
    codes = np.column_stack([rng.integers(1, c + 1, n) for c in cats])
    ds = OrdinalDataset(codes, cats=cats)
    d = tmp_path_factory.mktemp("rt")
    save_ordinal(ds, d / "o.csv", sidecar=d / "o.json")
    back = load_ordinal(d / "o.csv", sidecar=d / "o.json", strict=False)
    assert back.codes.tobytes() == ds.codes.tobytes()
    assert back.cats == ds.cats


def test_dataset_invariants():
    with pytest.raises(DimensionError):
        OrdinalDataset([[1, 2]])
    with pytest.raises(DomainError):
        OrdinalDataset([[1], [3]], cats=(2,))
    with pytest.raises(DomainError):
        OrdinalDataset([[1], [1.5]])
    ds = OrdinalDataset([[1], [2]])
    with pytest.raises(ValueError):
        ds.codes[0, 0] = 2


def test_validate_reports():
    ds = OrdinalDataset(np.array([[1, 2] * 10]).T)
    rep = validate(ds)
    assert rep.frequencies == {"Y1": [10, 10]} and rep.warnings == [] and rep.ok
    sparse = OrdinalDataset(np.array([[1] * 9 + [2]]).T)
    assert any("sparse category" in w for w in validate(sparse).warnings)
    declared = OrdinalDataset(np.array([[1, 2, 3, 4] * 3]).T, cats=(5,))
    rep = validate(declared)
    assert "Y1: category 5 unobserved" in rep.warnings and not rep.ok
    assert "N = 12, R = 1" in rep.format()


def test_recode_collapses_gaps():
    ds = OrdinalDataset(np.array([[1, 3, 3, 5], [2, 2, 1, 1]]).T, cats=(5, 2))
    out = recode(ds)
    np.testing.assert_array_equal(out.codes[:, 0], [1, 2, 2, 3])
    assert out.cats == (3, 2)
    check_complete(out)


def test_encode_country_dummies():
    countries = [f"c{k:02d}" for k in range(12)] + ["ref"]
    raw = {"country": countries * 3}
    P = encode_predictors(raw, {"country": "categorical:ref"})
    assert P.n_cols == 12
    assert all(m["reference"] == "ref" for m in P.col_meta)
    ref_rows = np.array(raw["country"]) == "ref"
    assert np.all(P.values[ref_rows] == 0)


def test_encode_numeric_standardized():
    P = encode_predictors({"age": [20, 30, 40]}, {"age": "numeric"})
    np.testing.assert_allclose(P.values[:, 0], [-1, 0, 1], atol=1e-15)


def test_encode_gender_single_column():
    P = encode_predictors({"gender": ["male", "female", "female", "male"]}, {"gender": "categorical:male"})
    assert P.col_names == ("gender[female]",)
    np.testing.assert_array_equal(P.values[:, 0], [0, 1, 1, 0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=60),
       st.lists(st.sampled_from("abcd"), min_size=60, max_size=60))
def test_encoding_properties(xs, labels):
    x = np.asarray(xs)
    if np.ptp(x) < 1e-3 * max(1.0, np.abs(x).max()):
        return
    labels = labels[: len(xs)]
    types = {"x": "numeric"}
    raw = {"x": xs}
    if len(set(labels)) >= 2:
        raw["g"] = labels
        types["g"] = "categorical"
    P = encode_predictors(raw, types)
    z = P.values[:, 0]
    assert abs(z.mean()) < 1e-12
    assert abs(z.std(ddof=1) - 1) < 1e-12
    dummies = P.values[:, 1:]
    assert set(np.unique(dummies)) <= {0.0, 1.0}
    assert np.all(dummies.sum(axis=1) <= 1)


def test_encode_errors():
    with pytest.raises(DegenerateColumn):
        encode_predictors({"x": [1, 1, 1]}, {"x": "numeric"})
    with pytest.raises(DegenerateColumn):
        encode_predictors({"g": ["a", "a"]}, {"g": "categorical"})
    with pytest.raises(InputError):
        encode_predictors({"g": ["a", "b"]}, {"g": "categorical:z"})


def test_load_predictors(tmp_path):
    p = write(tmp_path / "x.csv", "age,sex\nnumeric,categorical:m\n20,m\n30,f\n40,f\n")
    P = load_predictors(p)
    assert P.col_names == ("age", "sex[f]")
    assert P.col_meta[1] == {"kind": "dummy", "source": "sex", "level": "f", "reference": "m"}
    with pytest.raises(ParseError):
        load_predictors(write(tmp_path / "bad.csv", "age\nnumeric\n20\nold\n"))


def test_predictor_drop():
    P = encode_predictors({"a": [1, 2, 3], "g": ["x", "y", "z"]}, {"a": "numeric", "g": "categorical:x"})
    assert P.drop(["g"]).col_names == ("a",)
    assert P.drop(["g[y]"]).col_names == ("a", "g[z]")
    with pytest.raises(InputError):
        P.drop(["nope"])


def test_missing_predictor_rejected():
    with pytest.raises(DomainError):
        PredictorMatrix(np.array([[1.0], [np.nan]]), ["x"])


def test_model_config():
    c = ModelConfig.for_model("CLMDU", dims=3)
    assert (c.family, c.restricted, c.n_starts, c.model_name) == ("proximity", False, 10, "clmdu")
    assert ModelConfig.for_model("clpca").n_starts == 1
    assert ModelConfig.from_dict(c.to_dict()) == c
    with pytest.raises(DimensionError):
        ModelConfig(dims=3).check_data(10, 2)
    with pytest.raises(InputError):
        ModelConfig(tol_outer=0)
    with pytest.raises(InputError):
        ModelConfig(max_inner=0)
    with pytest.raises(InputError):
        ModelConfig.for_model("pca")
    ModelConfig(family="proximity", dims=5).check_data(10, 2)


def test_unwritable_path(tmp_path):
    ds = OrdinalDataset([[1], [2]])
    with pytest.raises(IoError):
        save_ordinal(ds, tmp_path / "missing" / "o.csv")
