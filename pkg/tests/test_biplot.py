import json
import xml.etree.ElementTree as ET
import warnings

import jsonschema
import numpy as np
import pytest

from clmda import biplot
from clmda.biplot import (
    SCENE_SCHEMA,
    BiplotScene,
    classify_points,
    classify_regions,
    clip_line,
    dominance_markers,
    proximity_radii,
    render,
    scene,
    scene_predictors,
    to_json,
    to_svg,
)
from clmda.core import ModelConfig
from clmda.driver import FitResult, structural
from clmda.exceptions import DimensionError, GeometryWarning, InputError, IoError
from clmda.loglik import category_probs

M = np.array([-2.0, -1.5, -0.5])
V_EX = np.array([1.0, 0.5])


def make_fit(family, V, thresholds, U=None, B=None, predictors=None, S=2):
    V = np.asarray(V, dtype=float)
    U = np.zeros((3, S)) if U is None else np.asarray(U, dtype=float)
    cfg = ModelConfig(family=family, restricted=B is not None, dims=S)
    return FitResult(
        config=cfg, U=U, V=V, thresholds=[np.asarray(m, dtype=float) for m in thresholds],
        theta_hat=structural(U, V, family), nll_trace=[1.0], npar=1, converged=True, B=B,
        var_names=tuple(f"y{r + 1}" for r in range(len(V))), cats=tuple(len(m) + 1 for m in thresholds),
        predictors=predictors,
    )


def test_marker_projection_reproduces_thresholds():
    mk = dominance_markers(V_EX, M)
    np.testing.assert_allclose(mk @ V_EX, M, atol=1e-10)
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.standard_normal(2)
        m = np.sort(rng.standard_normal(4))
        np.testing.assert_allclose(dominance_markers(v, m) @ v, m, atol=1e-10)


def test_decision_lines_are_perpendicular():
    s = scene(make_fit("dominance", [V_EX, [0.2, -1.0]], [M, M[:2]]))
    for ax in s.variable_axes:
        v = np.asarray(ax["direction"])
        for mk in ax["markers"]:
            a, b = (np.asarray(p) for p in mk["line"])
            assert abs((b - a) @ v) < 1e-10
            assert abs(a @ v - mk["threshold"]) < 1e-10
    assert [mk["label"] for mk in s.variable_axes[0]["markers"]] == ["1|2", "2|3", "3|4"]


def test_proximity_radii():
    assert proximity_radii(M).tolist() == [2.0, 1.5, 0.5]


def test_nonpositive_radius_omitted():
    s = scene(make_fit("proximity", [V_EX, [0.0, 1.0]], [M, [-1.0, 0.3]]))
    radii = [[c["radius"] for c in p["circles"]] for p in s.variable_points]
    assert radii == [[2.0, 1.5, 0.5], [1.0]]


def test_probability_on_circles():
    fit = make_fit("proximity", [V_EX], [M])
    angles = np.linspace(0, 2 * np.pi, 37)
    for c, a in enumerate(proximity_radii(M)):
        pts = V_EX + a * np.column_stack([np.cos(angles), np.sin(angles)])
        theta = structural(pts, V_EX[None, :], "proximity")[:, 0]
        p_above = category_probs(theta, M)[:, c + 1 :].sum(axis=1)
        assert np.max(np.abs(p_above - 0.5)) < 1e-10


def test_probability_on_decision_lines():
    fit = make_fit("dominance", [V_EX], [M])
    s = scene(fit)
    for mk in s.variable_axes[0]["markers"]:
        a, b = (np.asarray(p) for p in mk["line"])
        pts = a + np.linspace(0, 1, 11)[:, None] * (b - a)
        c = category_labels_index(mk["label"])
        p_above = category_probs(pts @ V_EX, M)[:, c:].sum(axis=1)
        assert np.max(np.abs(p_above - 0.5)) < 1e-10


def category_labels_index(label):
    return int(label.split("|")[0])


def test_predictor_segment_and_reference():
    B = np.array([[1.0, 0.0], [0.0, 1.0], [0.4, -0.3]])
    info = {
        "names": ["age", "score", "sex[f]"],
        "meta": [
            {"kind": "numeric", "source": "age"},
            {"kind": "numeric", "source": "score"},
            {"kind": "dummy", "source": "sex", "level": "f", "reference": "m"},
        ],
        "min": [-1.0, -2.0, 0.0],
        "max": [1.0, 0.5, 1.0],
    }
    fit = make_fit("dominance", [V_EX, [0.0, 1.0]], [M, M], B=B, predictors=info)
    axes, points = scene_predictors(fit)
    np.testing.assert_allclose(axes[0]["solid"], [[-1.0, 0.0], [1.0, 0.0]], atol=1e-15)
    score = axes[1]
    assert score["label_end"][1] > 0 and score["label_end"][1] >= score["solid"][1][1]
    ref = [p for p in points if p["reference"]]
    assert len(ref) == 1 and ref[0]["point"] == [0.0, 0.0] and ref[0]["level"] == "m"
    dummy = [p for p in points if not p["reference"]][0]
    np.testing.assert_allclose(dummy["point"], [0.4, -0.3])
    x0, x1, y0, y1 = scene(fit).bbox
    for ax in scene(fit).predictor_axes:
        for seg in ax["dotted"]:
            for x, y in seg:
                assert x0 - 1e-12 <= x <= x1 + 1e-12 and y0 - 1e-12 <= y <= y1 + 1e-12


def test_label_at_positive_end():
    s = scene(make_fit("dominance", [[0.0, 1.0]], [M]))
    ax = s.variable_axes[0]
    assert ax["label_end"][1] == max(p[1] for p in ax["axis"])


def test_zero_axis_omitted():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        s = scene(make_fit("dominance", [[0.0, 0.0], V_EX], [M, M]))
    assert [a["name"] for a in s.variable_axes] == ["y2"]
    assert any(issubclass(w.category, GeometryWarning) for w in rec)


def test_region_tie_rule():
    assert classify_points(np.array([-2.0, -1.9999, -0.5, 10.0, -5.0]), M).tolist() == [1, 2, 3, 4, 1]


def test_region_pointwise_oracle():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-4, 4, (500, 2))
    for family in ("dominance", "proximity"):
        fit = make_fit(family, [V_EX, [-0.7, 0.2]], [M, [-1.0, 0.0]])
        for r in range(2):
            got = classify_regions(fit, r, pts)
            theta = structural(pts, fit.V[r : r + 1], family)[:, 0]
            want = [1 + sum(t > m for m in fit.thresholds[r]) for t in theta]
            assert got.tolist() == want
    field = classify_regions(fit, "y1", (np.linspace(-1, 1, 5), np.linspace(-2, 2, 7)))
    assert field.shape == (7, 5)


def test_scene_validates_and_round_trips():
    for family in ("dominance", "proximity"):
        s = scene(make_fit(family, [V_EX, [0.3, -0.9]], [M, M[:2]], U=np.random.default_rng(2).standard_normal((6, 2))), regions="y1", grid_size=8)
        d = json.loads(to_json(s))
        jsonschema.validate(d, SCENE_SCHEMA)
        assert BiplotScene.from_dict(d).to_dict() == d


def test_dims_checked():
    fit = make_fit("dominance", [V_EX], [M])
    with pytest.raises(DimensionError):
        scene(fit, dims=(1, 3))
    with pytest.raises(DimensionError):
        scene(fit, dims=(2, 2))
    fit3 = make_fit("dominance", [[1.0, 0.0, 2.0]], [M], S=3)
    assert scene(fit3, dims=(1, 3)).variable_axes[0]["direction"] == [1.0, 2.0]
    with pytest.raises(DimensionError):
        scene(make_fit("dominance", [[1.0]], [M], S=1))


def test_clip_line():
    seg = clip_line((0, 0), (1, 1), (-1, 2, -1, 1))
    np.testing.assert_allclose(seg, [[-1, -1], [1, 1]])
    assert clip_line((5, 5), (1, 0), (-1, 1, -1, 1)) is None


def test_byte_identical_renders(tmp_path):
    fit = make_fit("proximity", [V_EX, [0.3, -0.9]], [M, M[:2]], U=np.random.default_rng(3).standard_normal((6, 2)))
    for fmt in ("svg", "json"):
        render(scene(fit, regions="y2", grid_size=10), fmt, tmp_path / f"a.{fmt}")
        render(scene(fit, regions="y2", grid_size=10), fmt, tmp_path / f"b.{fmt}")
        assert (tmp_path / f"a.{fmt}").read_bytes() == (tmp_path / f"b.{fmt}").read_bytes()


def test_empty_scene_svg():
    svg = to_svg(BiplotScene(family="dominance"))
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert svg.rstrip().endswith("</svg>")
    ET.fromstring(svg)
    fit = make_fit("dominance", [V_EX], [M], U=np.ones((4, 2)))
    ET.fromstring(to_svg(scene(fit, regions="y1", grid_size=6)))


def test_render_errors(tmp_path):
    s = BiplotScene(family="dominance")
    with pytest.raises(IoError):
        render(s, "svg", tmp_path / "missing" / "x.svg")
    with pytest.raises(InputError):
        render(s, "png", tmp_path / "x.png")
