"""Command-line interface: load a model, run one computation, emit a report.

Exit codes: 0 when the requested computation (and any checks it includes)
succeeds, 1 when a verification or validation run reports failures, 2 on
configuration or parse problems.  All numeric output is full round-trip
precision; reports with the same model, seed and budget are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .bundle import bundle_point
from .charts import AutoparallelChart, export_grid_csv
from .connection import GeneralConnection, cartan_linear_delta
from .dynamics import (
    IntegrationControls,
    exp_map_with_jacobian,
    integrate_autoparallel,
    integrate_horizontal_autoparallel,
)
from .errors import FinslerKitError, ModelFormatError
from .lagrangian import SampleSpec
from .models import load_model
from .verify import SCHEMA_VERSION, format_table, report_to_json, run_verification


@dataclass
class RunConfig:
    """One CLI invocation, fully determined (with the seed) before any work."""

    command: str
    model: str
    point: np.ndarray | None = None
    direction: np.ndarray | None = None
    velocity: np.ndarray | None = None
    fiber: np.ndarray | None = None
    base: np.ndarray | None = None
    x_tilde: np.ndarray | None = None
    y_tilde: np.ndarray | None = None
    kind: str = "extended"
    t_end: float = 1.0
    rtol: float = 1e-10
    atol: float = 1e-12
    radius: float = 0.5
    samples: int = 200
    budget: str = "quick"
    seed: int = 0
    output: str | None = None
    format: str = "json"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("integration tolerances must be positive")
        if self.radius <= 0:
            raise ValueError("chart radius must be positive")
        if self.t_end == 0:
            raise ValueError("t-end must be nonzero")

    def controls(self) -> IntegrationControls:
        return IntegrationControls(rtol=self.rtol, atol=self.atol)


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated decimals, got {text!r}"
        ) from err


def _matrix_list(arr: np.ndarray) -> list:
    return np.asarray(arr, dtype=float).tolist()


def _emit_json(doc: dict, output: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _require_dim(model, name, vec) -> np.ndarray:
    if vec is None:
        raise ValueError(f"--{name} is required for this command")
    if len(vec) != model.dimension:
        raise ValueError(
            f"--{name} has {len(vec)} components, model has dimension {model.dimension}"
        )
    return vec


def _default_base(model) -> np.ndarray:
    dom = model.domain or {}
    n = model.dimension
    lo = np.asarray(dom.get("x_min", [-1.0] * n), float)
    hi = np.asarray(dom.get("x_max", [1.0] * n), float)
    return 0.5 * (lo + hi)


# -- subcommand bodies ----------------------------------------------------------


def _cmd_validate(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    spec = SampleSpec.for_model(model, count=cfg.samples, seed=cfg.seed)
    report = model.validate_spacetime(spec)
    doc = {"schema_version": SCHEMA_VERSION, "command": "validate", "model": cfg.model}
    doc.update(report.as_dict())
    _emit_json(doc, cfg.output)
    return 0 if report.all_passed else 1


def _cmd_connection(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    x = _require_dim(model, "point", cfg.point)
    y = _require_dim(model, "direction", cfg.direction)
    conn = GeneralConnection.cartan(model)
    p = bundle_point(x, y)
    ev = conn.evaluate(p)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "connection",
        "model": cfg.model,
        "point": _matrix_list(x),
        "direction": _matrix_list(y),
        "N": _matrix_list(ev.N),
        "berwald": _matrix_list(conn.berwald(p)),
        "delta_christoffel": _matrix_list(cartan_linear_delta(model, p)),
        "curvature": _matrix_list(ev.R),
    }
    _emit_json(doc, cfg.output)
    return 0


def _emit_trajectory(traj, output) -> None:
    if output:
        traj.to_csv(output)
    else:
        traj.to_csv(sys.stdout)


def _cmd_geodesic(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    x = _require_dim(model, "point", cfg.point)
    u = _require_dim(model, "direction", cfg.direction)
    conn = GeneralConnection.cartan(model)
    traj = integrate_autoparallel(conn, x, u, cfg.t_end, cfg.controls())
    _emit_trajectory(traj, cfg.output)
    return 0


def _cmd_autoparallel(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    x = _require_dim(model, "point", cfg.point)
    u = _require_dim(model, "velocity", cfg.velocity)
    v = _require_dim(model, "fiber", cfg.fiber)
    conn = GeneralConnection.cartan(model)
    traj = integrate_horizontal_autoparallel(conn, x, u, v, cfg.t_end, cfg.controls())
    _emit_trajectory(traj, cfg.output)
    return 0


def _cmd_expmap(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    x = _require_dim(model, "point", cfg.point)
    u = _require_dim(model, "velocity", cfg.velocity)
    v = _require_dim(model, "fiber", cfg.fiber)
    conn = GeneralConnection.cartan(model)
    end, dxdu, dydu, dxdv, dydv = exp_map_with_jacobian(
        conn, x, u, v, wrt="uv", controls=cfg.controls()
    )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "expmap",
        "model": cfg.model,
        "point": _matrix_list(x),
        "velocity": _matrix_list(u),
        "fiber": _matrix_list(v),
        "x": _matrix_list(end.x),
        "y": _matrix_list(end.y),
        "jacobian": {
            "dx_du": _matrix_list(dxdu),
            "dy_du": _matrix_list(dydu),
            "dx_dv": _matrix_list(dxdv),
            "dy_dv": _matrix_list(dydv),
        },
    }
    _emit_json(doc, cfg.output)
    return 0


def _cmd_chart(cfg: RunConfig) -> int:
    model = load_model(cfg.model)
    base = cfg.base if cfg.base is not None else _default_base(model)
    base = _require_dim(model, "base", base)
    xt = _require_dim(model, "x-tilde", cfg.x_tilde)
    yt = _require_dim(model, "y-tilde", cfg.y_tilde)
    conn = GeneralConnection.cartan(model)
    chart = AutoparallelChart(conn, base, kind=cfg.kind, radius_hint=cfg.radius)
    if cfg.format == "csv":
        if not cfg.output:
            raise ValueError("csv format requires --output")
        export_grid_csv(chart, [xt], yt, cfg.output)
        return 0
    doc = {"schema_version": SCHEMA_VERSION, "command": "chart", "model": cfg.model}
    doc.update(chart.record(xt, yt))
    order = cfg.extra.get("series_order")
    if order:
        approx = chart.series_forward(xt, yt, order)
        doc["series"] = {
            "order": order,
            "x": _matrix_list(approx.x),
            "y": _matrix_list(approx.y),
        }
    _emit_json(doc, cfg.output)
    return 0


def _cmd_verify(cfg: RunConfig) -> int:
    report = run_verification(cfg.model, seed=cfg.seed, budget=cfg.budget)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(report_to_json(report))
        sys.stdout.write(format_table(report) + "\n")
    elif cfg.format == "json":
        sys.stdout.write(report_to_json(report))
    else:
        sys.stdout.write(format_table(report) + "\n")
    return 0 if report["all_passed"] else 1


_COMMANDS = {
    "validate": _cmd_validate,
    "connection": _cmd_connection,
    "geodesic": _cmd_geodesic,
    "autoparallel": _cmd_autoparallel,
    "expmap": _cmd_expmap,
    "chart": _cmd_chart,
    "verify": _cmd_verify,
}


def run(cfg: RunConfig) -> int:
    """Dispatch one parsed invocation; returns the process exit status."""
    try:
        return _COMMANDS[cfg.command](cfg)
    except (ModelFormatError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FinslerKitError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finslerkit",
        description="Connections, autoparallel dynamics and adapted charts for "
        "homogeneous Lagrangian models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="builtin:NAME or a model JSON path")
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="sample-based Lagrangian admissibility report")
    common(p)
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("connection", help="connection tensors at one bundle point")
    common(p)
    p.add_argument("--point", type=_vector, required=True)
    p.add_argument("--direction", type=_vector, required=True)

    p = sub.add_parser("geodesic", help="canonical-lift autoparallel, CSV trajectory")
    common(p)
    p.add_argument("--point", type=_vector, required=True)
    p.add_argument("--direction", type=_vector, required=True)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)

    p = sub.add_parser(
        "autoparallel", help="horizontal autoparallel with independent seeds, CSV"
    )
    common(p)
    p.add_argument("--point", type=_vector, required=True)
    p.add_argument("--velocity", type=_vector, required=True)
    p.add_argument("--fiber", type=_vector, required=True)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)

    p = sub.add_parser("expmap", help="exponential map value and Jacobian blocks")
    common(p)
    p.add_argument("--point", type=_vector, required=True)
    p.add_argument("--velocity", type=_vector, required=True)
    p.add_argument("--fiber", type=_vector, required=True)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)

    p = sub.add_parser("chart", help="adapted-chart evaluation with round-trip audit")
    common(p)
    p.add_argument("--base", type=_vector, help="chart center (default: domain midpoint)")
    p.add_argument("--kind", choices=["extended", "standard"], default="extended")
    p.add_argument("--x-tilde", type=_vector, required=True)
    p.add_argument("--y-tilde", type=_vector, required=True)
    p.add_argument("--radius", type=float, default=0.5, help="trust-region radius")
    p.add_argument("--series-order", type=int, choices=[1, 2, 3])
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("verify", help="run the property-verification suite")
    common(p)
    p.add_argument("--budget", choices=["quick", "full"], default="quick")
    p.add_argument("--format", choices=["table", "json"], default="table")

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    extra = {}
    if getattr(args, "series_order", None):
        extra["series_order"] = args.series_order
    return RunConfig(
        command=args.command,
        model=args.model,
        point=getattr(args, "point", None),
        direction=getattr(args, "direction", None),
        velocity=getattr(args, "velocity", None),
        fiber=getattr(args, "fiber", None),
        base=getattr(args, "base", None),
        x_tilde=getattr(args, "x_tilde", None),
        y_tilde=getattr(args, "y_tilde", None),
        kind=getattr(args, "kind", "extended"),
        t_end=getattr(args, "t_end", 1.0),
        rtol=getattr(args, "rtol", 1e-10),
        atol=getattr(args, "atol", 1e-12),
        radius=getattr(args, "radius", 0.5),
        samples=getattr(args, "samples", 200),
        budget=getattr(args, "budget", "quick"),
        seed=args.seed,
        output=args.output,
        format=getattr(args, "format", "json"),
        extra=extra,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
