"""Builtin model documents and JSON loading/saving.

A model document is a JSON mapping with fields ``dimension``,
``homogeneity_degree``, ``family`` and ``parameters`` (coefficient fields are
expression strings in x1..xn, y1..yn).  An optional ``domain`` block records
the coordinate box on which the chart is valid plus the fiber-norm band used
by samplers; builtins whose coordinates are angles or radii rely on it.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ModelFormatError
from .lagrangian import FinslerLagrangian

BUILTIN_PREFIX = "builtin:"

_I4 = [["1", "0", "0", "0"], ["0", "-1", "0", "0"], ["0", "0", "-1", "0"], ["0", "0", "0", "-1"]]

BUILTIN_MODELS: dict[str, dict] = {
    # 4-d flat metric of Lorentzian signature; every connection object is zero
    "flat4d": {
        "dimension": 4,
        "homogeneity_degree": 2,
        "family": "quadratic",
        "parameters": {"metric": _I4},
        "domain": {"x_min": [-1, -1, -1, -1], "x_max": [1, 1, 1, 1]},
    },
    # flat plane in polar coordinates (x1 = radius, x2 = angle): curvature
    # vanishes but the connection does not
    "polar2d": {
        "dimension": 2,
        "homogeneity_degree": 2,
        "family": "quadratic",
        "parameters": {"metric": [["1", "0"], ["0", "x1^2"]]},
        "domain": {"x_min": [0.5, -3.0], "x_max": [3.0, 3.0]},
    },
    # round unit 2-sphere (x1 = colatitude, x2 = longitude): constant positive
    # curvature, poles excluded from the sampling box
    "sphere2d": {
        "dimension": 2,
        "homogeneity_degree": 2,
        "family": "quadratic",
        "parameters": {"metric": [["1", "0"], ["0", "sin(x1)^2"]]},
        "domain": {"x_min": [0.6, -2.5], "x_max": [2.5, 2.5]},
    },
    # flat Euclidean part plus a small position-dependent one-form of constant
    # length 0.1 (at x2 = 0 the form is exactly (0.1, 0))
    "randers2d": {
        "dimension": 2,
        "homogeneity_degree": 2,
        "family": "randers",
        "parameters": {
            "metric": [["1", "0"], ["0", "1"]],
            "one_form": ["0.1 * cos(x2)", "0.1 * sin(x2)"],
            "exponent": 2,
        },
        "domain": {"x_min": [-1.0, -1.5], "x_max": [1.0, 1.5]},
    },
    # genuinely quartic (r = 4) example: a conformal factor times a positive
    # definite fourth-degree form, so the L-metric is nondegenerate off the
    # zero section
    "quartic4d": {
        "dimension": 4,
        "homogeneity_degree": 4,
        "family": "pth_root",
        "parameters": {
            "form": "exp(0.4 * x1 + 0.2 * x4) * "
            "((y1^2 + y2^2 + y3^2 + y4^2)^2 + y1^4 + y2^4 + y3^4 + y4^4) / 2",
            "p": 4,
        },
        "domain": {"x_min": [-1, -1, -1, -1], "x_max": [1, 1, 1, 1]},
    },
}


def builtin_names() -> list[str]:
    return sorted(BUILTIN_MODELS)


def load_model(source) -> FinslerLagrangian:
    """Load a model from ``builtin:NAME``, a JSON file path, or a dict."""
    if isinstance(source, FinslerLagrangian):
        return source
    if isinstance(source, dict):
        return FinslerLagrangian.from_dict(source)
    name = str(source)
    if name.startswith(BUILTIN_PREFIX):
        key = name[len(BUILTIN_PREFIX):]
        if key not in BUILTIN_MODELS:
            raise ModelFormatError(
                f"unknown builtin model {key!r}; available: {', '.join(builtin_names())}"
            )
        return FinslerLagrangian.from_dict(BUILTIN_MODELS[key])
    path = Path(name)
    if not path.exists():
        raise ModelFormatError(f"model file {name!r} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ModelFormatError(f"model file {name!r} is not valid JSON: {err}") from err
    return FinslerLagrangian.from_dict(doc)


def save_model(model: FinslerLagrangian, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")
