"""Biplot and triplot geometry for fitted models, with JSON and SVG output.

Dominance variables are drawn as axes through the origin carrying one
marker per threshold; the line through a marker orthogonal to the axis
separates adjacent categories.  Proximity variables are points with one
circle per threshold of radius -m (circles with nonpositive radius are
left out).  Restricted fits add predictor axes (numeric predictors) and
category points (dummies, the reference category at the origin).

Dimensions are addressed 1-based, as in the command line.  For S > 2
the scene is the projection onto the chosen pair.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import atomic_write
from .exceptions import DimensionError, GeometryWarning, InputError

SCENE_SCHEMA_ID = "biplot/1"

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_SEGMENT = {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2}

#: JSON schema of the scene file
SCENE_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "schema", "family", "dims", "bbox", "row_points", "variable_axes",
        "variable_points", "predictor_axes", "predictor_points", "regions",
    ],
    "properties": {
        "schema": {"const": SCENE_SCHEMA_ID},
        "config": {"type": ["object", "null"]},
        "family": {"enum": ["dominance", "proximity", None]},
        "model": {"type": ["string", "null"]},
        "dims": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
        "bbox": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
        "row_points": {"anyOf": [{"type": "null"}, {"type": "array", "items": _POINT}]},
        "variable_axes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "direction", "axis", "label_end", "markers"],
                "properties": {
                    "name": {"type": "string"},
                    "direction": _POINT,
                    "axis": _SEGMENT,
                    "label_end": _POINT,
                    "markers": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["label", "threshold", "point", "line"],
                            "properties": {
                                "label": {"type": "string"},
                                "threshold": {"type": "number"},
                                "point": _POINT,
                                "line": {"anyOf": [{"type": "null"}, _SEGMENT]},
                            },
                        },
                    },
                },
            },
        },
        "variable_points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "point", "circles"],
                "properties": {
                    "name": {"type": "string"},
                    "point": _POINT,
                    "circles": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["label", "threshold", "radius"],
                            "properties": {
                                "label": {"type": "string"},
                                "threshold": {"type": "number"},
                                "radius": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    },
                },
            },
        },
        "predictor_axes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "direction", "solid", "dotted", "label_end"],
                "properties": {
                    "name": {"type": "string"},
                    "direction": _POINT,
                    "solid": _SEGMENT,
                    "dotted": {"type": "array", "items": _SEGMENT},
                    "label_end": _POINT,
                },
            },
        },
        "predictor_points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "source", "level", "point", "reference"],
                "properties": {
                    "name": {"type": "string"},
                    "source": {"type": "string"},
                    "level": {"type": "string"},
                    "point": _POINT,
                    "reference": {"type": "boolean"},
                },
            },
        },
        "regions": {
            "anyOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "required": ["variable", "xs", "ys", "categories"],
                    "properties": {
                        "variable": {"type": "string"},
                        "xs": {"type": "array", "items": {"type": "number"}},
                        "ys": {"type": "array", "items": {"type": "number"}},
                        "categories": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                        },
                    },
                },
            ]
        },
    },
}


@dataclass
class BiplotScene:
    """Plain-data description of a biplot; every coordinate is 2-D."""

    family: str = None
    model: str = None
    dims: tuple = (1, 2)
    bbox: tuple = (-1.0, 1.0, -1.0, 1.0)
    row_points: list = None
    variable_axes: list = field(default_factory=list)
    variable_points: list = field(default_factory=list)
    predictor_axes: list = field(default_factory=list)
    predictor_points: list = field(default_factory=list)
    regions: dict = None
    config: dict = None

    def to_dict(self) -> dict:
        return _clean({
            "config": self.config,
            "schema": SCENE_SCHEMA_ID,
            "family": self.family,
            "model": self.model,
            "dims": list(self.dims),
            "bbox": list(self.bbox),
            "row_points": self.row_points,
            "variable_axes": self.variable_axes,
            "variable_points": self.variable_points,
            "predictor_axes": self.predictor_axes,
            "predictor_points": self.predictor_points,
            "regions": self.regions,
        })

    @classmethod
    def from_dict(cls, d: dict) -> "BiplotScene":
        if d.get("schema") != SCENE_SCHEMA_ID:
            raise InputError(f"not a biplot scene (schema {d.get('schema')!r})")
        return cls(
            family=d["family"], model=d.get("model"), dims=tuple(d["dims"]), bbox=tuple(d["bbox"]),
            row_points=d["row_points"], variable_axes=d["variable_axes"],
            variable_points=d["variable_points"], predictor_axes=d["predictor_axes"],
            predictor_points=d["predictor_points"], regions=d["regions"], config=d.get("config"),
        )


def _clean(obj):
    # numpy scalars and arrays to plain JSON types
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


# -- geometry helpers ---------------------------------------------------------


def category_labels(n_thresholds: int) -> list:
    return [f"{c}|{c + 1}" for c in range(1, n_thresholds + 1)]


def dominance_markers(v, m) -> np.ndarray:
    """Marker points m_c v / (v'v), one row per threshold."""
    v = np.asarray(v, dtype=float)
    m = np.asarray(m, dtype=float)
    return m[:, None] * v[None, :] / float(v @ v)


def proximity_radii(m) -> np.ndarray:
    """Circle radii a_c = -m_c (possibly nonpositive; those are not drawn)."""
    return -np.asarray(m, dtype=float)


def clip_line(point, direction, bbox):
    """Segment of the line point + t direction inside bbox, or None."""
    x0, x1, y0, y1 = bbox
    p = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    lo, hi = -np.inf, np.inf
    for k, (a, b) in enumerate(((x0, x1), (y0, y1))):
        if d[k] == 0:
            if not a <= p[k] <= b:
                return None
            continue
        ta, tb = (a - p[k]) / d[k], (b - p[k]) / d[k]
        lo, hi = max(lo, min(ta, tb)), min(hi, max(ta, tb))
    if lo > hi:
        return None
    return [p + lo * d, p + hi * d]


def _check_dims(dims, S):
    try:
        a, b = (int(d) for d in dims)
    except (TypeError, ValueError):
        raise DimensionError(f"dims must be a pair of integers, got {dims!r}") from None
    if S < 2:
        raise DimensionError("a biplot needs at least two dimensions")
    if a == b or not (1 <= a <= S and 1 <= b <= S):
        raise DimensionError(f"dims {a},{b} must be two distinct values in 1..{S}")
    return a, b


def _plane(fit, dims):
    a, b = _check_dims(dims, fit.config.dims)
    cols = [a - 1, b - 1]
    U = np.asarray(fit.U, dtype=float)[:, cols]
    V = np.asarray(fit.V, dtype=float)[:, cols]
    B = None if fit.B is None else np.asarray(fit.B, dtype=float)[:, cols]
    return (a, b), U, V, B


def _names(fit):
    names = tuple(fit.var_names) if fit.var_names else ()
    if len(names) != len(fit.thresholds):
        names = tuple(f"V{r + 1}" for r in range(len(fit.thresholds)))
    return names


def _bbox(points, pad=0.08):
    pts = [np.asarray(p, dtype=float).reshape(-1, 2) for p in points if p is not None and np.size(p)]
    pts.append(np.zeros((1, 2)))
    allp = np.vstack(pts)
    lo = allp.min(axis=0)
    hi = allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo = lo - pad * span
    hi = hi + pad * span
    return (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


# -- scenes ---------------------------------------------------------------------


def scene_dominance(fit, dims=(1, 2), show_rows=True) -> BiplotScene:
    """Variable axes with threshold markers and decision lines."""
    if fit.config.family != "dominance":
        raise InputError("scene_dominance needs a dominance-family fit")
    dims, U, V, B = _plane(fit, dims)
    names = _names(fit)
    raw = []
    for r, name in enumerate(names):
        v = V[r]
        if not float(v @ v) > 0:
            warnings.warn(f"{name}: zero-length variable axis omitted", GeometryWarning, stacklevel=2)
            continue
        raw.append((name, v, dominance_markers(v, fit.thresholds[r]), np.asarray(fit.thresholds[r], dtype=float)))
    pred_axes, pred_points, pred_extent = _predictor_parts(fit, B)
    bbox = _bbox([U if show_rows else None] + [mk for _, _, mk, _ in raw] + [V] + pred_extent)
    axes = []
    for name, v, markers, m in raw:
        axis = clip_line((0.0, 0.0), v, bbox)
        normal = np.array([-v[1], v[0]])
        entries = []
        for label, thr, pt in zip(category_labels(len(m)), m, markers):
            entries.append({"label": label, "threshold": thr, "point": pt, "line": clip_line(pt, normal, bbox)})
        axes.append({
            "name": name,
            "direction": v,
            "axis": axis,
            "label_end": _positive_end(axis, v),
            "markers": entries,
        })
    scene = BiplotScene(
        family="dominance", model=fit.config.model_name, dims=dims, bbox=bbox,
        row_points=U if show_rows else None, variable_axes=axes,
    )
    _attach_predictors(scene, pred_axes, pred_points)
    return _clean_scene(scene)


def scene_proximity(fit, dims=(1, 2), circles=None, show_rows=True) -> BiplotScene:
    """Variable points with category circles of radius -m.

    ``circles`` restricts circles to the named variables (default: all).
    """
    if fit.config.family != "proximity":
        raise InputError("scene_proximity needs a proximity-family fit")
    dims, U, V, B = _plane(fit, dims)
    names = _names(fit)
    if circles is not None:
        unknown = set(circles) - set(names)
        if unknown:
            raise InputError(f"unknown variables for circles: {sorted(unknown)}")
    points = []
    extent = []
    for r, name in enumerate(names):
        m = np.asarray(fit.thresholds[r], dtype=float)
        entries = []
        if circles is None or name in circles:
            for label, thr, a in zip(category_labels(len(m)), m, proximity_radii(m)):
                if a > 0:
                    entries.append({"label": label, "threshold": thr, "radius": a})
                    extent.append(V[r] + np.array([[-a, -a], [a, a]]))
        points.append({"name": name, "point": V[r], "circles": entries})
    pred_axes, pred_points, pred_extent = _predictor_parts(fit, B)
    bbox = _bbox([U if show_rows else None, V] + extent + pred_extent)
    scene = BiplotScene(
        family="proximity", model=fit.config.model_name, dims=dims, bbox=bbox,
        row_points=U if show_rows else None, variable_points=points,
    )
    _attach_predictors(scene, pred_axes, pred_points)
    return _clean_scene(scene)


def scene(fit, dims=(1, 2), circles=None, regions=None, grid_size=60, show_rows=True) -> BiplotScene:
    """Scene for any fit; ``regions`` names one variable whose category field is added."""
    if fit.config.family == "dominance":
        out = scene_dominance(fit, dims, show_rows=show_rows)
    else:
        out = scene_proximity(fit, dims, circles=circles, show_rows=show_rows)
    if regions is not None:
        add_regions(out, fit, regions, grid_size)
    return out


def _positive_end(segment, direction):
    """Endpoint of a clipped axis on the side where the projection onto direction grows."""
    if segment is None:
        return None
    d = np.asarray(direction, dtype=float)
    return segment[1] if segment[1] @ d >= segment[0] @ d else segment[0]


def _predictor_parts(fit, B):
    """Raw predictor geometry (before clipping) and the points that must fit the frame."""
    if B is None or not fit.predictors:
        return [], [], []
    info = fit.predictors
    axes, points, extent = [], [], []
    refs = {}
    for j, (name, meta) in enumerate(zip(info["names"], info["meta"])):
        b = B[j]
        if meta.get("kind") == "dummy":
            points.append({"name": name, "source": meta["source"], "level": meta["level"], "point": b, "reference": False})
            refs.setdefault(meta["source"], meta.get("reference", ""))
            extent.append(b)
            continue
        if not float(b @ b) > 0:
            warnings.warn(f"{name}: zero-length predictor axis omitted", GeometryWarning, stacklevel=3)
            continue
        solid = [info["min"][j] * b, info["max"][j] * b]
        axes.append({"name": name, "direction": b, "solid": solid})
        extent.extend(solid)
    for source, ref in refs.items():
        points.append({
            "name": f"{source}[{ref}]", "source": source, "level": ref,
            "point": np.zeros(2), "reference": True,
        })
    return axes, points, extent


def scene_predictors(fit, X_meta=None, dims=(1, 2)):
    """Predictor overlay (axes, points) for a restricted fit.

    ``X_meta`` overrides the predictor description stored with the fit
    (``names``, ``meta``, ``min`` and ``max``).
    """
    if not fit.config.restricted or fit.B is None:
        raise InputError("predictor overlay needs a restricted fit")
    if X_meta is not None:
        fit = _with_predictors(fit, X_meta)
    _, U, V, B = _plane(fit, dims)
    axes, points, extent = _predictor_parts(fit, B)
    bbox = _bbox([U, V] + extent)
    holder = BiplotScene(bbox=bbox)
    _attach_predictors(holder, axes, points)
    return _clean(holder.predictor_axes), _clean(holder.predictor_points)


class _with_predictors:
    def __init__(self, fit, info):
        self._fit = fit
        self.predictors = info

    def __getattr__(self, name):
        return getattr(self._fit, name)


def _attach_predictors(scene, axes, points):
    for ax in axes:
        b = ax["direction"]
        line = clip_line((0.0, 0.0), b, scene.bbox)
        s0, s1 = ax["solid"]
        dotted = []
        if line is not None:
            # dotted extension from each end of the solid part to the frame
            lo, hi = (s0, s1) if s0 @ b <= s1 @ b else (s1, s0)
            start, end = (line[0], line[1]) if line[0] @ b <= line[1] @ b else (line[1], line[0])
            if start @ b < lo @ b:
                dotted.append([start, lo])
            if end @ b > hi @ b:
                dotted.append([hi, end])
            label = end
        else:
            label = s1 if s1 @ b >= s0 @ b else s0
        scene.predictor_axes.append({**ax, "dotted": dotted, "label_end": label})
    scene.predictor_points.extend(points)


def _clean_scene(s):
    for name in ("row_points", "variable_axes", "variable_points", "predictor_axes", "predictor_points"):
        setattr(s, name, _clean(getattr(s, name)))
    s.bbox = tuple(float(v) for v in s.bbox)
    s.dims = tuple(int(v) for v in s.dims)
    return s


# -- regions -------------------------------------------------------------------


def classify_points(z, m) -> np.ndarray:
    """Category 1 + #{c : z > m_c}; a value exactly on a threshold goes to the lower category."""
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    return 1 + (z[..., None] > m).sum(axis=-1)


def classify_regions(fit, variable, grid, dims=(1, 2)) -> np.ndarray:
    """Predicted category of one variable at each point of a 2-D grid.

    ``grid`` is either an array of points (G x 2), giving G categories, or
    a pair (xs, ys), giving a len(ys) x len(xs) field.  The latent value is
    the inner product with the variable's loading (dominance) or minus the
    distance to the variable point (proximity), both within the plane shown.
    """
    _, _, V, _ = _plane(fit, dims)
    names = _names(fit)
    r = names.index(variable) if isinstance(variable, str) else int(variable)
    if not 0 <= r < len(names):
        raise InputError(f"no variable {variable!r}")
    if isinstance(grid, tuple) and len(grid) == 2:
        xs, ys = (np.asarray(g, dtype=float) for g in grid)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx, gy], axis=-1)
    else:
        pts = np.asarray(grid, dtype=float)
    v = V[r]
    if fit.config.family == "dominance":
        z = pts @ v
    else:
        z = -np.sqrt(((pts - v) ** 2).sum(axis=-1))
    return classify_points(z, fit.thresholds[r])


def add_regions(scene_obj: BiplotScene, fit, variable, grid_size=60) -> BiplotScene:
    x0, x1, y0, y1 = scene_obj.bbox
    xs = np.linspace(x0, x1, grid_size)
    ys = np.linspace(y0, y1, grid_size)
    cats = classify_regions(fit, variable, (xs, ys), scene_obj.dims)
    name = variable if isinstance(variable, str) else _names(fit)[int(variable)]
    scene_obj.regions = _clean({"variable": name, "xs": xs, "ys": ys, "categories": cats})
    return scene_obj


# -- output --------------------------------------------------------------------

_PALETTE = ("#e8eef7", "#cfdcef", "#a9c1e3", "#7fa3d4", "#5683c2", "#3465a8", "#1f4b8a", "#10336b")
_SVG_SIZE = 640
_MARGIN = 24


def _fmt(v):
    return f"{v:.3f}"


class _Frame:
    def __init__(self, bbox):
        x0, x1, y0, y1 = bbox
        span = max(x1 - x0, y1 - y0, 1e-12)
        self.scale = (_SVG_SIZE - 2 * _MARGIN) / span
        self.x0, self.y1 = x0, y1
        self.width = (x1 - x0) * self.scale + 2 * _MARGIN
        self.height = (y1 - y0) * self.scale + 2 * _MARGIN

    def __call__(self, p):
        # y grows upwards in the scene, downwards in SVG
        return _MARGIN + (p[0] - self.x0) * self.scale, _MARGIN + (self.y1 - p[1]) * self.scale


def _esc(text):
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def to_svg(s: BiplotScene) -> str:
    """Self-contained SVG 1.1 document (inline styles, generic font family)."""
    f = _Frame(s.bbox)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(f.width)}" '
        f'height="{_fmt(f.height)}" viewBox="0 0 {_fmt(f.width)} {_fmt(f.height)}" '
        'font-family="sans-serif" font-size="10">',
    ]

    def line(a, b, style):
        (x1, y1), (x2, y2) = f(a), f(b)
        out.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" style="{style}"/>')

    def text(p, label, style="fill:#000"):
        x, y = f(p)
        out.append(f'<text x="{_fmt(x + 3)}" y="{_fmt(y - 3)}" style="{style}">{_esc(label)}</text>')

    x0, x1, y0, y1 = s.bbox
    if s.regions is not None:
        xs, ys = s.regions["xs"], s.regions["ys"]
        dx = (xs[1] - xs[0]) if len(xs) > 1 else (x1 - x0)
        dy = (ys[1] - ys[0]) if len(ys) > 1 else (y1 - y0)
        out.append('<g id="regions">')
        for j, yv in enumerate(ys):
            for i, xv in enumerate(xs):
                px, py = f((xv - dx / 2, yv + dy / 2))
                c = _PALETTE[(s.regions["categories"][j][i] - 1) % len(_PALETTE)]
                out.append(
                    f'<rect x="{_fmt(px)}" y="{_fmt(py)}" width="{_fmt(dx * f.scale)}" '
                    f'height="{_fmt(dy * f.scale)}" style="fill:{c};stroke:none"/>'
                )
        out.append("</g>")
    px, py = f((x0, y1))
    out.append(
        f'<rect x="{_fmt(px)}" y="{_fmt(py)}" width="{_fmt((x1 - x0) * f.scale)}" '
        f'height="{_fmt((y1 - y0) * f.scale)}" style="fill:none;stroke:#000;stroke-width:1"/>'
    )
    if x0 <= 0 <= x1:
        line((0, y0), (0, y1), "stroke:#bbb;stroke-width:0.5")
    if y0 <= 0 <= y1:
        line((x0, 0), (x1, 0), "stroke:#bbb;stroke-width:0.5")
    if s.row_points:
        out.append('<g id="rows">')
        for p in s.row_points:
            x, y = f(p)
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="1.5" style="fill:#888;stroke:none"/>')
        out.append("</g>")
    for ax in s.variable_axes:
        if ax["axis"] is not None:
            line(ax["axis"][0], ax["axis"][1], "stroke:#000;stroke-width:1")
            text(ax["label_end"], ax["name"], "fill:#000;font-weight:bold")
        for mk in ax["markers"]:
            if mk["line"] is not None:
                line(mk["line"][0], mk["line"][1], "stroke:#c33;stroke-width:0.5;stroke-dasharray:3,2")
            x, y = f(mk["point"])
            out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.5" style="fill:#c33;stroke:none"/>')
            text(mk["point"], mk["label"], "fill:#c33")
    for vp in s.variable_points:
        cx, cy = f(vp["point"])
        for c in vp["circles"]:
            out.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(c["radius"] * f.scale)}" '
                'style="fill:none;stroke:#36c;stroke-width:0.8"/>'
            )
        out.append(
            f'<rect x="{_fmt(cx - 3)}" y="{_fmt(cy - 3)}" width="6" height="6" style="fill:#36c;stroke:none"/>'
        )
        text(vp["point"], vp["name"], "fill:#36c;font-weight:bold")
    for ax in s.predictor_axes:
        line(ax["solid"][0], ax["solid"][1], "stroke:#393;stroke-width:1.2")
        for seg in ax["dotted"]:
            line(seg[0], seg[1], "stroke:#393;stroke-width:0.8;stroke-dasharray:1,2")
        text(ax["label_end"], ax["name"], "fill:#393")
    for pp in s.predictor_points:
        x, y = f(pp["point"])
        out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" style="fill:#393;stroke:none"/>')
        text(pp["point"], pp["name"], "fill:#393")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def to_json(s: BiplotScene) -> str:
    return json.dumps(s.to_dict(), indent=1, sort_keys=True) + "\n"


def render(s: BiplotScene, format: str, path) -> None:
    """Write the scene as ``svg`` or ``json``; the write is atomic."""
    if format == "svg":
        text = to_svg(s)
    elif format == "json":
        text = to_json(s)
    else:
        raise InputError(f"unknown format {format!r} (svg or json)")
    atomic_write(path, text)
