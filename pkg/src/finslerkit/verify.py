"""Property-verification suite behind the ``verify`` subcommand.

Every check measures one mathematical identity of a model's canonical
connection (or of the charts built from it) and reports the worst scaled
residual over a seeded sample set.  Reports are plain dicts designed for
stable JSON serialization: given the same model, seed and budget, two runs
produce byte-identical output.

Budgets trade coverage for runtime.  ``quick`` is smoke scale; ``full`` uses
the acceptance-scale sample counts on two-dimensional models.  On higher
dimensional models the chart checks stay at smoke scale (one augmented
tangent solve costs seconds there, not milliseconds), and the standard-kind
chart rows are skipped unless the connection is flat.  The identity and
dynamics checks always run at the requested scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bundle import TangentBundlePoint, bundle_point
from .charts import AutoparallelChart
from .connection import GeneralConnection, cartan_linear_delta
from .dynamics import (
    IntegrationControls,
    exp_derivatives,
    exp_map,
    integrate_autoparallel,
    integrate_horizontal_autoparallel,
)
from .lagrangian import FinslerLagrangian, SampleSpec
from .models import load_model
from .numerics import thread_map

SCHEMA_VERSION = 1

_TIGHT = IntegrationControls(rtol=1e-12, atol=1e-14)

# connections whose coefficients stay below this at probe points are treated
# as identically flat (exact-shift checks apply, convergence-rate checks do not)
_FLATNESS_PROBE_TOL = 1e-12


@dataclass
class CheckResult:
    id: str
    claim: str
    model: str
    seed: int
    samples: int
    max_residual: float
    tolerance: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "claim": self.claim,
            "model": self.model,
            "seed": self.seed,
            "samples": self.samples,
            "max_residual": float(self.max_residual),
            "tolerance": float(self.tolerance),
            "passed": bool(self.passed),
        }


def _row(ctx, id, claim, samples, residual, tolerance) -> CheckResult:
    residual = float(residual)
    return CheckResult(
        id=id,
        claim=claim,
        model=ctx.name,
        seed=ctx.seed,
        samples=int(samples),
        max_residual=residual,
        tolerance=float(tolerance),
        passed=residual <= tolerance,
    )


@dataclass
class _Ctx:
    name: str
    model: FinslerLagrangian
    conn: GeneralConnection
    seed: int
    budget: str
    counts: dict
    flat: bool
    heavy: bool  # dimension > 2 with a curved connection: augmented solves are slow

    @property
    def dimension(self) -> int:
        return self.model.dimension

    def rng(self, slot: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, slot])

    def base_point(self) -> np.ndarray:
        dom = self.model.domain or {}
        n = self.dimension
        lo = np.asarray(dom.get("x_min", [-1.0] * n), float)
        hi = np.asarray(dom.get("x_max", [1.0] * n), float)
        return 0.5 * (lo + hi)

    def draw_fiber(self, rng, lo=0.5, hi=2.0) -> np.ndarray:
        v = rng.standard_normal(self.dimension)
        v /= np.linalg.norm(v)
        return v * (lo + (hi - lo) * rng.random())

    def draw_inner_x(self, rng) -> np.ndarray:
        dom = self.model.domain or {}
        n = self.dimension
        lo = np.asarray(dom.get("x_min", [-1.0] * n), float)
        hi = np.asarray(dom.get("x_max", [1.0] * n), float)
        return lo + (0.25 + 0.5 * rng.random(n)) * (hi - lo)

    def chart(self, kind: str) -> AutoparallelChart:
        return AutoparallelChart(self.conn, self.base_point(), kind=kind, radius_hint=1.5)


def _counts(budget: str, dimension: int) -> dict:
    full = budget == "full"
    counts = {
        "identity": 200 if full else 25,
        "rescale": 20 if full else 4,
        "exp_zero": 20 if full else 5,
        "exp_blocks": 6 if full else 2,
        "levi_civita": 10 if full else 3,
        "berwald_bases": 5 if full else 2,
        "berwald_fibers": 10 if full else 3,
        "geodesics": 3 if full else 1,
        "chart_center": 100 if full else 3,
        "chart_flat": 20 if full else 2,
        "chart_hess": 10 if full else 2,
        "round_trip": 50 if full else 5,
        "curv_invariance": 3 if full else 1,
        "series": 3 if full else 1,
        "flat_probe": 8 if full else 3,
    }
    if dimension > 2:
        # every chart probe above dimension 2 pays for augmented tangent
        # solves; keep those sweeps at smoke scale regardless of budget
        counts["exp_blocks"] = min(counts["exp_blocks"], 3)
        counts["chart_center"] = 3 if full else 1
        counts["chart_flat"] = 3 if full else 1
        counts["round_trip"] = 6 if full else 3
        counts["series"] = 1
    return counts


def _unit_index(n, v):
    e = [0] * (2 * n)
    e[v] = 1
    return tuple(e)


# -- check implementations ------------------------------------------------------
#
# Each function returns a list of CheckResult rows (empty when the check does
# not apply to the model).  The slot number passed to ctx.rng pins the sample
# stream per check, so report content is independent of execution order.


def _check_identities(ctx: _Ctx) -> list:
    n = ctx.dimension
    r = ctx.model.homogeneity_degree
    rng = ctx.rng(0)
    spec = SampleSpec.for_model(ctx.model, count=ctx.counts["identity"], seed=ctx.seed)
    worst = dict.fromkeys(
        ("euler", "constancy", "symmetry", "homogeneity", "spray", "annihilation", "cyclic"),
        0.0,
    )
    for _ in range(spec.count):
        p = spec.draw(rng, n)
        ev = ctx.conn.evaluate(p)
        jet = ctx.model.taylor(p, 1)
        gx = np.array([jet.partial(_unit_index(n, a)) for a in range(n)])
        gy = np.array([jet.partial(_unit_index(n, n + a)) for a in range(n)])
        value = ctx.model.evaluate(p)

        euler = abs(float(gy @ p.y) - r * value) / (1.0 + abs(r * value))
        worst["euler"] = max(worst["euler"], euler)

        vertical = ev.N.T @ gy
        scale = 1.0 + np.abs(gx).max() + np.abs(vertical).max()
        worst["constancy"] = max(worst["constancy"], np.abs(gx - vertical).max() / scale)

        sym = np.abs(ev.dN_y - np.transpose(ev.dN_y, (0, 2, 1))).max()
        worst["symmetry"] = max(worst["symmetry"], sym / (1.0 + np.abs(ev.dN_y).max()))

        for lam in (0.5, 2.0):
            scaled = ctx.conn.coefficients(bundle_point(p.x, lam * p.y))
            gap = np.abs(scaled - lam * ev.N).max()
            worst["homogeneity"] = max(
                worst["homogeneity"], gap / ((1.0 + np.abs(ev.N).max()) * max(1.0, lam))
            )

        G = cartan_linear_delta(ctx.model, p)
        spray_gap = np.abs(np.einsum("abc,b->ac", G, p.y) - ev.N).max()
        worst["spray"] = max(worst["spray"], spray_gap / (1.0 + np.abs(ev.N).max()))

        contraction = np.einsum("rbc,r->bc", ev.R, gy)
        worst["annihilation"] = max(
            worst["annihilation"],
            np.abs(contraction).max() / (1.0 + np.abs(ev.R).max() * np.abs(gy).max()),
        )

        g = ctx.model.l_metric(p)
        R_low = np.einsum("am,mbd->abd", g, ev.R)
        cyclic = R_low + np.transpose(R_low, (1, 2, 0)) + np.transpose(R_low, (2, 0, 1))
        worst["cyclic"] = max(worst["cyclic"], np.abs(cyclic).max() / (1.0 + np.abs(R_low).max()))

    count = spec.count
    return [
        _row(ctx, "euler-degree",
             "fiber scaling acts on L with its homogeneity degree: y^a dL/dy^a = r L",
             count, worst["euler"], 1e-12),
        _row(ctx, "horizontal-constancy",
             "the horizontal derivative of the Lagrangian vanishes: delta_a L = 0",
             count, worst["constancy"], 1e-10),
        _row(ctx, "fiber-symmetry",
             "fiber derivatives of the connection commute: dN^a_c/dy^b = dN^a_b/dy^c",
             count, worst["symmetry"], 1e-10),
        _row(ctx, "connection-homogeneity",
             "the connection coefficients are positively 1-homogeneous in the fiber",
             count, worst["homogeneity"], 1e-10),
        _row(ctx, "spray-contraction",
             "contracting the delta-Christoffel symbols with y reproduces N",
             count, worst["spray"], 1e-9),
        _row(ctx, "curvature-annihilation",
             "the curvature contracts to zero against the fiber gradient of L",
             count, worst["annihilation"], 1e-8),
        _row(ctx, "curvature-cyclic-sum",
             "the lowered curvature sums to zero over cyclic index rotations",
             count, worst["cyclic"], 1e-8),
    ]


def _check_velocity_rescaling(ctx: _Ctx) -> list:
    rng = ctx.rng(1)
    worst = 0.0
    count = ctx.counts["rescale"]
    for _ in range(count):
        x0 = ctx.draw_inner_x(rng)
        u = ctx.draw_fiber(rng, 0.2, 0.35)
        v = ctx.draw_fiber(rng)
        ref = integrate_horizontal_autoparallel(ctx.conn, x0, u, v, 2.0, _TIGHT)
        for alpha in (0.25, 0.5, 2.0):
            end = integrate_horizontal_autoparallel(
                ctx.conn, x0, alpha * u, v, 1.0, _TIGHT
            ).endpoint
            at = ref.state(alpha)
            gap = np.linalg.norm(np.concatenate([end.x - at.x, end.y - at.y]))
            worst = max(worst, gap)
    return [
        _row(ctx, "velocity-rescaling",
             "rescaling the velocity seed reparametrizes the horizontal autoparallel",
             count, worst, 1e-8),
    ]


def _check_exp_zero_velocity(ctx: _Ctx) -> list:
    rng = ctx.rng(2)
    worst = 0.0
    count = ctx.counts["exp_zero"]
    n = ctx.dimension
    for _ in range(count):
        x0 = ctx.draw_inner_x(rng)
        v = ctx.draw_fiber(rng)
        end = exp_map(ctx.conn, x0, np.zeros(n), v, _TIGHT)
        worst = max(worst, np.abs(end.x - x0).max(), np.abs(end.y - v).max())
    return [
        _row(ctx, "exp-zero-velocity",
             "the exponential map with zero velocity seed fixes the base and fiber",
             count, worst, 1e-12),
    ]


def _check_exp_derivative_blocks(ctx: _Ctx) -> list:
    rng = ctx.rng(3)
    n = ctx.dimension
    worst = 0.0
    count = ctx.counts["exp_blocks"]
    for _ in range(count):
        x0 = ctx.draw_inner_x(rng)
        v = ctx.draw_fiber(rng)
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        blocks = exp_derivatives(ctx.conn, x0, v)
        base = exp_map(ctx.conn, x0, np.zeros(n), v, _TIGHT)

        def along_u(h):
            return exp_map(ctx.conn, x0, h * w, v, _TIGHT)

        def along_v(h):
            return exp_map(ctx.conn, x0, np.zeros(n), v + h * w, _TIGHT)

        def rich(pairs):
            a, b = pairs  # values at steps h and h/2
            return (4.0 * b - a) / 3.0

        def d1(path, h):
            p, m = path(h), path(-h)
            return (p.x - m.x) / (2 * h), (p.y - m.y) / (2 * h)

        h = 1e-2
        u_h, u_h2 = d1(along_u, h), d1(along_u, h / 2)
        v_h, v_h2 = d1(along_v, h), d1(along_v, h / 2)

        def gap(fd, block):
            closed = block @ w
            return np.abs(fd - closed).max() / (1.0 + np.abs(closed).max())

        worst = max(worst, gap(rich([u_h[0], u_h2[0]]), blocks.dx_du))
        worst = max(worst, gap(rich([u_h[1], u_h2[1]]), blocks.dy_du))
        worst = max(worst, gap(rich([v_h[0], v_h2[0]]), blocks.dx_dv))
        worst = max(worst, gap(rich([v_h[1], v_h2[1]]), blocks.dy_dv))

        def d2(h):
            p, m = along_u(h), along_u(-h)
            return (p.x - 2 * base.x + m.x) / h**2, (p.y - 2 * base.y + m.y) / h**2

        a1, a2 = d2(2e-2), d2(1e-2)
        cl2x = np.einsum("qbc,b,c->q", blocks.d2x_duu, w, w)
        cl2y = np.einsum("qbc,b,c->q", blocks.d2y_duu, w, w)
        worst = max(worst, np.abs(rich([a1[0], a2[0]]) - cl2x).max() / (1.0 + np.abs(cl2x).max()))
        worst = max(worst, np.abs(rich([a1[1], a2[1]]) - cl2y).max() / (1.0 + np.abs(cl2y).max()))

        def d3(h):
            p2, p1 = along_u(2 * h), along_u(h)
            m1, m2 = along_u(-h), along_u(-2 * h)
            return (p2.x - 2 * p1.x + 2 * m1.x - m2.x) / (2 * h**3)

        cl3 = np.einsum("qbcd,b,c,d->q", blocks.d3x_duuu, w, w, w)
        fd3 = rich([d3(4e-2), d3(2e-2)])
        worst = max(worst, np.abs(fd3 - cl3).max() / (1.0 + np.abs(cl3).max()))
    return [
        _row(ctx, "exp-derivative-blocks",
             "closed-form derivative blocks of the exponential map match the integrated flow",
             count, worst, 1e-5),
    ]


def _fd_levi_civita(model: FinslerLagrangian, xv: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Christoffel symbols of the quadratic form's metric, by polarization + FD."""
    n = model.dimension

    def metric(x):
        g = np.empty((n, n))
        for a in range(n):
            for b in range(n):
                ya, yb = np.zeros(n), np.zeros(n)
                ya[a] = 1.0
                yb[b] = 1.0
                g[a, b] = 0.5 * (
                    model.evaluate(bundle_point(x, ya + yb))
                    - model.evaluate(bundle_point(x, ya))
                    - model.evaluate(bundle_point(x, yb))
                )
        return g

    dg = np.empty((n, n, n))  # dg[c][q][b] = d_c g_qb
    for c in range(n):
        e = np.zeros(n)
        e[c] = h
        dg[c] = (metric(xv + e) - metric(xv - e)) / (2 * h)
    ginv = np.linalg.inv(metric(xv))
    gamma = np.empty((n, n, n))
    for b in range(n):
        for c in range(n):
            gamma[:, b, c] = 0.5 * ginv @ (dg[b][:, c] + dg[c][:, b] - dg[:, b, c])
    return gamma


def _check_levi_civita(ctx: _Ctx) -> list:
    if ctx.model.family != "quadratic":
        return []
    rng = ctx.rng(4)
    n = ctx.dimension
    worst = 0.0
    count = ctx.counts["levi_civita"]
    for _ in range(count):
        x0 = ctx.draw_inner_x(rng)
        y = ctx.draw_fiber(rng)
        gamma = _fd_levi_civita(ctx.model, x0)
        N = ctx.conn.coefficients(bundle_point(x0, y))
        gap = np.abs(np.einsum("abc,c->ab", gamma, y) - N).max()
        worst = max(worst, gap / (1.0 + np.abs(N).max()))
    return [
        _row(ctx, "levi-civita-reduction",
             "for a quadratic Lagrangian the connection is the Levi-Civita transport",
             count, worst, 1e-8),
    ]


def _check_berwald_y_independence(ctx: _Ctx) -> list:
    if ctx.model.family != "quadratic":
        return []
    rng = ctx.rng(5)
    worst = 0.0
    bases = ctx.counts["berwald_bases"]
    fibers = ctx.counts["berwald_fibers"]
    for _ in range(bases):
        x0 = ctx.draw_inner_x(rng)
        ref_D = ref_G = None
        for _ in range(fibers):
            p = bundle_point(x0, ctx.draw_fiber(rng))
            D = ctx.conn.berwald(p)
            G = cartan_linear_delta(ctx.model, p)
            if ref_D is None:
                ref_D, ref_G = D, G
                continue
            worst = max(worst, np.abs(D - ref_D).max() / (1.0 + np.abs(ref_D).max()))
            worst = max(worst, np.abs(G - ref_G).max() / (1.0 + np.abs(ref_G).max()))
    return [
        _row(ctx, "berwald-y-independence",
             "for a quadratic Lagrangian the Berwald and delta-Christoffel symbols are fiber-independent",
             bases * fibers, worst, 1e-9),
    ]


def _check_flat_exactness(ctx: _Ctx) -> list:
    if not ctx.flat:
        return []
    rng = ctx.rng(6)
    n = ctx.dimension
    spec = SampleSpec.for_model(ctx.model, count=ctx.counts["flat_probe"], seed=ctx.seed)
    tensor_worst = 0.0
    for _ in range(spec.count):
        p = spec.draw(rng, n)
        ev = ctx.conn.evaluate(p)
        tensor_worst = max(
            tensor_worst,
            np.abs(ev.N).max(),
            np.abs(ev.R).max(),
            np.abs(ctx.conn.berwald(p)).max(),
            np.abs(cartan_linear_delta(ctx.model, p)).max(),
        )

    map_worst = 0.0
    x0 = ctx.base_point()
    charts = [ctx.chart("extended"), ctx.chart("standard")]
    for _ in range(3):
        u = ctx.draw_fiber(rng, 0.2, 0.4)
        v = ctx.draw_fiber(rng)
        end = exp_map(ctx.conn, x0, u, v, _TIGHT)
        map_worst = max(map_worst, np.abs(end.x - (x0 + u)).max(), np.abs(end.y - v).max())
        for chart in charts:
            q = chart.to_manifold(u, v)
            map_worst = max(map_worst, np.abs(q.x - (x0 + u)).max(), np.abs(q.y - v).max())
    return [
        _row(ctx, "flat-connection-tensors",
             "a flat model has vanishing connection, Berwald, delta-Christoffel and curvature tensors",
             spec.count, tensor_worst, 1e-13),
        _row(ctx, "flat-shift-maps",
             "on a flat model the exponential map and both charts act as coordinate shifts",
             3, map_worst, 1e-10),
    ]


def _check_chart_center_connection(ctx: _Ctx) -> list:
    rng = ctx.rng(7)
    n = ctx.dimension
    count = ctx.counts["chart_center"]
    kinds = ["extended"] if ctx.heavy else ["extended", "standard"]
    rows = []
    for kind in kinds:
        chart = ctx.chart(kind)
        worst = 0.0
        for _ in range(count):
            yt = ctx.draw_fiber(rng)
            coeff = chart.connection_in_chart(np.zeros(n), yt)
            ambient = ctx.conn.coefficients(bundle_point(chart.base, yt))
            worst = max(worst, np.abs(coeff).max() / (1.0 + np.abs(ambient).max()))
        rows.append(
            _row(ctx, f"chart-center-connection-{kind}",
                 f"the {kind}-kind chart connection vanishes on the fiber over the center",
                 count, worst, 1e-6)
        )
    return rows


def _check_chart_lagrangian_flatness(ctx: _Ctx) -> list:
    rng = ctx.rng(8)
    chart = ctx.chart("extended")
    worst = 0.0
    count = ctx.counts["chart_flat"]
    for _ in range(count):
        yt = ctx.draw_fiber(rng)
        lag = chart.lagrangian_in_chart(yt)
        scale = 1.0 + abs(lag.value)
        worst = max(worst, np.abs(lag.grad_xt).max() / scale, np.abs(lag.hess_xt).max() / scale)
    return [
        _row(ctx, "chart-lagrangian-flatness",
             "in the extended chart the Lagrangian is stationary to second order at the center",
             count, worst, 1e-5),
    ]


def _check_chart_hessian_curvature(ctx: _Ctx) -> list:
    # the standard-kind Hessian costs ~4 n^2 augmented solves per sample; not
    # worth a report row above dimension 2
    if ctx.dimension > 2:
        return []
    rng = ctx.rng(9)
    chart = ctx.chart("standard")
    worst = 0.0
    count = ctx.counts["chart_hess"]
    for _ in range(count):
        yt = ctx.draw_fiber(rng)
        hess = chart.lagrangian_in_chart(yt).hess_xt
        p = bundle_point(chart.base, yt)
        g = ctx.model.l_metric(p)
        R = ctx.conn.evaluate(p).R
        target = (2.0 / 3.0) * np.einsum("d,am,mbd->ab", yt, g, R)
        worst = max(worst, np.abs(hess - target).max() / (1.0 + np.abs(target).max()))
    return [
        _row(ctx, "chart-hessian-curvature",
             "the standard-chart Hessian of L at the center is 2/3 of the fiber-contracted lowered curvature",
             count, worst, 1e-4),
    ]


def _check_chart_round_trip(ctx: _Ctx) -> list:
    if ctx.heavy:
        return []
    rng = ctx.rng(10)
    n = ctx.dimension
    count = ctx.counts["round_trip"]
    rows = []
    for kind in ("extended", "standard"):
        chart = ctx.chart(kind)
        worst = 0.0
        for _ in range(count):
            dx = rng.standard_normal(n)
            dx *= 0.3 * rng.random() / np.linalg.norm(dx)
            p = bundle_point(chart.base + dx, ctx.draw_fiber(rng))
            xt, yt = chart.from_manifold(p)
            q = chart.to_manifold(xt, yt)
            worst = max(worst, np.abs(q.x - p.x).max(), np.abs(q.y - p.y).max())
        rows.append(
            _row(ctx, f"chart-round-trip-{kind}",
                 f"inverting the {kind}-kind chart and mapping back reproduces the bundle point",
                 count, worst, 1e-8)
        )
    return rows


def _check_straight_geodesics(ctx: _Ctx) -> list:
    if ctx.model.family != "quadratic" or ctx.heavy:
        return []
    rng = ctx.rng(11)
    chart = ctx.chart("standard")
    worst = 0.0
    count = ctx.counts["geodesics"]
    for _ in range(count):
        u0 = ctx.draw_fiber(rng, 0.25, 0.4)
        traj = integrate_autoparallel(ctx.conn, chart.base, u0, 0.75, _TIGHT)
        ray = None
        for t in (0.25, 0.5, 0.75):
            xt, _ = chart.from_manifold(traj.state(t))
            if ray is None:
                ray = xt / t
                continue
            worst = max(worst, np.abs(xt / t - ray).max())
    return [
        _row(ctx, "chart-straight-geodesics",
             "geodesics through the center are straight rays in standard chart coordinates",
             count, worst, 1e-8),
    ]


def _check_curvature_invariance(ctx: _Ctx) -> list:
    if ctx.dimension > 2:
        return []
    rng = ctx.rng(12)
    chart = ctx.chart("standard")
    worst = 0.0
    count = ctx.counts["curv_invariance"]
    for _ in range(count):
        yt = ctx.draw_fiber(rng)
        in_chart = chart.curvature_in_chart(yt)
        ambient = ctx.conn.evaluate(bundle_point(chart.base, yt)).R
        worst = max(worst, np.abs(in_chart - ambient).max() / (1.0 + np.abs(ambient).max()))
    return [
        _row(ctx, "chart-curvature-invariance",
             "curvature evaluated inside the standard chart equals the ambient curvature on the center fiber",
             count, worst, 1e-4),
    ]


def _band_row(ctx, id, claim, samples, ratios, band) -> CheckResult:
    lo, hi = band
    outside = 0.0
    for ratio in ratios:
        if not np.isfinite(ratio):
            outside = max(outside, float("inf"))
        elif ratio < lo:
            outside = max(outside, lo - ratio)
        elif ratio > hi:
            outside = max(outside, ratio - hi)
    return _row(ctx, id, claim, samples, outside, 0.0)


def _check_series_orders(ctx: _Ctx) -> list:
    if ctx.flat:
        return []  # truncation errors vanish identically; there is no rate to measure
    rng = ctx.rng(13)
    n = ctx.dimension
    count = ctx.counts["series"]
    s1, s2 = 0.1, 0.05
    # differences below this are integrator noise, not truncation error; a
    # ratio of two such numbers says nothing about the order (the kinds
    # coincide outright wherever the curvature vanishes)
    floor = 1e-10

    ratios_x, ratios_y, ratios_gap = [], [], []
    for _ in range(count):
        # a generic base point per sample: symmetry points of a model (e.g.
        # the equator of a sphere) can null the leading series coefficients
        base = ctx.draw_inner_x(rng)
        w = rng.standard_normal(n)
        w /= np.linalg.norm(w)
        yt = ctx.draw_fiber(rng, 0.5, 1.0)
        ext = AutoparallelChart(ctx.conn, base, kind="extended", radius_hint=1.5)
        std = None if ctx.heavy else AutoparallelChart(
            ctx.conn, base, kind="standard", radius_hint=1.5
        )

        def err_x(s):
            return np.abs(ext.series_forward(s * w, yt, 3).x - ext.to_manifold(s * w, yt).x).max()

        def err_y(s):
            return np.abs(ext.series_forward(s * w, yt, 2).y - ext.to_manifold(s * w, yt).y).max()

        e2 = err_x(s2)
        if e2 >= floor:
            ratios_x.append(err_x(s1) / e2)
        e2 = err_y(s2)
        if e2 >= floor:
            ratios_y.append(err_y(s1) / e2)
        if std is not None:
            def gap(s):
                return np.abs(ext.to_manifold(s * w, yt).y - std.to_manifold(s * w, yt).y).max()

            g2 = gap(s2)
            if g2 >= floor:
                ratios_gap.append(gap(s1) / g2)

    rows = [
        _band_row(ctx, "series-order-cubic",
                  "the order-3 coordinate series misses the integrated map at fourth order (ratio in [12, 20])",
                  count, ratios_x, (12.0, 20.0)),
        _band_row(ctx, "series-order-quadratic",
                  "the order-2 fiber series misses the integrated map at third order (ratio in [6, 10])",
                  count, ratios_y, (6.0, 10.0)),
    ]
    if not ctx.heavy:
        rows.append(
            _band_row(ctx, "series-kind-gap",
                      "extended and standard charts agree to second order (ratio in [3.2, 5])",
                      count, ratios_gap, (3.2, 5.0))
        )
    return rows


_REGISTRY = [
    _check_identities,
    _check_velocity_rescaling,
    _check_exp_zero_velocity,
    _check_exp_derivative_blocks,
    _check_levi_civita,
    _check_berwald_y_independence,
    _check_flat_exactness,
    _check_chart_center_connection,
    _check_chart_lagrangian_flatness,
    _check_chart_hessian_curvature,
    _check_chart_round_trip,
    _check_straight_geodesics,
    _check_curvature_invariance,
    _check_series_orders,
]


def _is_flat(model: FinslerLagrangian, conn: GeneralConnection) -> bool:
    spec = SampleSpec.for_model(model, count=3, seed=2)
    rng = np.random.default_rng(2)
    return all(
        np.abs(conn.coefficients(spec.draw(rng, model.dimension))).max() < _FLATNESS_PROBE_TOL
        for _ in range(3)
    )


def run_verification(model_source, seed: int = 0, budget: str = "quick") -> dict:
    """Run every applicable check for one model and assemble the report dict."""
    if budget not in ("quick", "full"):
        raise ValueError(f"unknown budget {budget!r}; expected 'quick' or 'full'")
    model = load_model(model_source)
    conn = GeneralConnection.cartan(model)
    name = str(model_source) if not isinstance(model_source, FinslerLagrangian) else "<object>"
    flat = _is_flat(model, conn)
    ctx = _Ctx(
        name=name,
        model=model,
        conn=conn,
        seed=int(seed),
        budget=budget,
        counts=_counts(budget, model.dimension),
        flat=flat,
        heavy=model.dimension > 2 and not flat,
    )
    # checks are independent; assembly order is the registry order either way
    batches = thread_map(lambda check: check(ctx), _REGISTRY)
    checks = [row for batch in batches for row in batch]
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "model": name,
        "seed": int(seed),
        "budget": budget,
        "all_passed": all(row.passed for row in checks),
        "checks": [row.as_dict() for row in checks],
    }


def report_to_json(report: dict) -> str:
    """Serialize with repr floats and fixed ordering; byte-stable per input."""
    return json.dumps(report, indent=2) + "\n"


def format_table(report: dict) -> str:
    """Plain-text pass/fail table for terminal output."""
    lines = []
    header = f"{'check':<34} {'samples':>7} {'max residual':>13} {'tolerance':>10} {'status':>6}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report["checks"]:
        lines.append(
            f"{row['id']:<34} {row['samples']:>7} {row['max_residual']:>13.3e} "
            f"{row['tolerance']:>10.1e} {'pass' if row['passed'] else 'FAIL':>6}"
        )
    lines.append(
        f"{'all checks passed' if report['all_passed'] else 'FAILURES PRESENT'}"
        f" (model {report['model']}, seed {report['seed']}, budget {report['budget']})"
    )
    return "\n".join(lines)
