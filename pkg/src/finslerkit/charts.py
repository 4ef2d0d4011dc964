"""Locally autoparallel charts: bundle coordinates adapted to a connection.

Both chart kinds are centered on a manifold point x0 and built from the
time-one exponential map of the horizontal autoparallel flow:

* the *extended* chart sends (xt, yt) to EXP(xt, yt) directly, moving
  position and direction labels independently on the bundle;
* the *standard* chart keeps the extended x-part and derives its fiber
  coordinate through the position Jacobian, y = (dx/dxt) yt, mimicking a
  manifold-induced change of coordinates.  It is only defined for
  connections declared homogeneous and fiber-symmetric.

The ODE-based forward map is authoritative everywhere: Jacobians come from
the variational flow, and only genuinely second-derivative data of the
integrated map (the standard kind's fiber blocks) fall back to Richardson
finite differences of variational Jacobians.  The truncated power series
around xt = 0 serve as diagnostics and as Newton seeds for inversion — they
are never the answer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .bundle import TangentBundlePoint, bundle_point
from .connection import GeneralConnection
from .dynamics import IntegrationControls, exp_map, exp_map_with_jacobian
from .errors import (
    ExcludedSetEntered,
    FinslerKitError,
    NearDegenerateMetric,
    NearZeroDirection,
    NewtonDiverged,
    OrderUnsupported,
    OutsideTrustRegion,
    SingularJacobian,
)
from .numerics import richardson_gradient, richardson_hessian

# Steps for differencing quantities that are themselves ODE outputs.  With the
# chart's default integration accuracy (rtol 1e-12) the propagated noise is
# ~1e-12/step while the Richardson-extrapolated truncation error is O(step^4),
# so these pairs keep both error sources a couple of orders below the
# tolerances the chart guarantees are verified at.
JACOBIAN_FD_STEPS = (1e-2, 5e-3)
LAGRANGIAN_FD_STEPS = (1e-2, 5e-3)
FIBER_FD_STEPS = (2e-2, 1e-2)

JACOBIAN_CONDITION_LIMIT = 1e12

_MAX_BACKTRACKS = 25


def _tight_controls() -> IntegrationControls:
    return IntegrationControls(rtol=1e-12, atol=1e-14)


@dataclass
class NewtonConfig:
    tolerance: float = 1e-10
    max_iterations: int = 50
    damping: float = 0.5  # step shrink factor while the residual fails to drop


@dataclass
class ChartJacobianSeries:
    """Power-series blocks of the chart map's Jacobian around xt = 0.

    Zeroth-order blocks are (n, n); the ``*_lin`` tensors are (n, n, n) with
    the last index labelling the xt-coordinate the coefficient multiplies:
    block(xt) = block0 + block_lin[..., c] xt^c + O(xt^2).
    """

    kind: str
    dx_dxt: np.ndarray
    dx_dyt: np.ndarray
    dy_dxt: np.ndarray
    dy_dyt: np.ndarray
    dx_dxt_lin: np.ndarray
    dx_dyt_lin: np.ndarray
    dy_dxt_lin: np.ndarray
    dy_dyt_lin: np.ndarray


@dataclass
class ChartLagrangian:
    value: float
    grad_xt: np.ndarray
    hess_xt: np.ndarray


def _sym_pair(t: np.ndarray) -> np.ndarray:
    """Symmetrize an (n, n, n) tensor in its last two slots."""
    return 0.5 * (t + np.transpose(t, (0, 2, 1)))


def _sym_triple(t: np.ndarray) -> np.ndarray:
    """Symmetrize an (n, n, n, n) tensor over its last three slots."""
    out = np.zeros_like(t)
    for perm in [(1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)]:
        out += np.transpose(t, (0,) + perm)
    return out / 6.0


@dataclass
class AutoparallelChart:
    """A chart around x0 in which the connection coefficients vanish on the
    center fiber.

    ``kind`` selects extended or standard coordinates; the standard kind
    refuses connections not declared homogeneous and symmetric (spot-check
    declarations with ``GeneralConnection.validate_flags`` when in doubt).
    ``radius_hint`` is the trust radius for forward evaluation, not a
    guaranteed injectivity radius.
    """

    connection: GeneralConnection
    base: np.ndarray
    kind: str = "extended"
    newton_config: NewtonConfig = field(default_factory=NewtonConfig)
    radius_hint: float = 0.5
    controls: IntegrationControls = field(default_factory=_tight_controls)

    def __post_init__(self):
        if self.kind not in ("extended", "standard"):
            raise ValueError(f"unknown chart kind {self.kind!r}")
        self.base = np.asarray(self.base, dtype=float)
        if self.kind == "standard" and not (
            self.connection.homogeneous and self.connection.symmetric
        ):
            raise FinslerKitError(
                "standard charts require a connection declared homogeneous "
                "and symmetric; the fiber coordinate y = (dx/dxt) yt is not "
                "center-adapted otherwise"
            )

    # -- forward map -----------------------------------------------------------

    @property
    def dimension(self) -> int:
        return self.connection.dimension

    def _check_trust(self, xt: np.ndarray):
        r = float(np.linalg.norm(xt))
        if r > self.radius_hint:
            raise OutsideTrustRegion(
                f"|xt| = {r:.4g} exceeds the chart trust radius {self.radius_hint:.4g}"
            )

    def _forward_state(self, xt: np.ndarray, yt: np.ndarray) -> np.ndarray:
        if self.kind == "extended":
            return exp_map(self.connection, self.base, xt, yt, self.controls).as_state()
        end, dxdu, _, _, _ = exp_map_with_jacobian(
            self.connection, self.base, xt, yt, wrt="u", controls=self.controls
        )
        return np.concatenate([end.x, dxdu @ yt])

    def to_manifold(self, xt, yt) -> TangentBundlePoint:
        """Map chart coordinates to the bundle point they label."""
        xt = np.asarray(xt, dtype=float)
        yt = np.asarray(yt, dtype=float)
        self._check_trust(xt)
        if self.kind == "extended":
            return exp_map(self.connection, self.base, xt, yt, self.controls)
        end, dxdu, _, _, _ = exp_map_with_jacobian(
            self.connection, self.base, xt, yt, wrt="u", controls=self.controls
        )
        return bundle_point(end.x, dxdu @ yt)

    # -- inverse map -----------------------------------------------------------

    def _newton_seed(self, p: TangentBundlePoint) -> np.ndarray:
        """Second-order inverse series at (x0, y), the Newton starting point."""
        try:
            ev = self.connection.evaluate(bundle_point(self.base, p.y))
        except (NearZeroDirection, NearDegenerateMetric) as err:
            raise ExcludedSetEntered(f"inverse seed evaluation failed: {err}") from err
        d = p.x - self.base
        xt = d + 0.5 * np.einsum("qbc,b,c->q", ev.dN_y, d, d)
        quad = ev.delta_N + 2.0 * np.einsum("rc,qrb->qbc", ev.N, ev.dN_y)
        yt = p.y + ev.N @ d + 0.5 * np.einsum("qbc,b,c->q", quad, d, d)
        return np.concatenate([xt, yt])

    def _forward_with_update_matrix(self, z: np.ndarray):
        """Forward state at z = (xt, yt) plus a Newton update matrix.

        For the extended kind the matrix is the exact variational-flow
        Jacobian; for the standard kind the fiber rows are borrowed from the
        extended map, which matches the true Jacobian to O(|xt|) — a
        quasi-Newton update that stays contractive inside the trust region.
        """
        n = self.dimension
        end, dxdu, dydu, dxdv, dydv = exp_map_with_jacobian(
            self.connection, self.base, z[:n], z[n:], wrt="uv", controls=self.controls
        )
        if self.kind == "extended":
            state = end.as_state()
        else:
            state = np.concatenate([end.x, dxdu @ z[n:]])
        return state, np.block([[dxdu, dxdv], [dydu, dydv]])

    def from_manifold(self, p: TangentBundlePoint):
        """Invert the forward map by damped Newton from the series seed."""
        cfg = self.newton_config
        n = self.dimension
        target = p.as_state()
        z = self._newton_seed(p)

        res = np.inf
        for _ in range(cfg.max_iterations):
            state, update = self._forward_with_update_matrix(z)
            F = state - target
            res = float(np.abs(F).max())
            if res <= cfg.tolerance:
                return z[:n].copy(), z[n:].copy()
            try:
                step = np.linalg.solve(update, -F)
            except np.linalg.LinAlgError as err:
                raise NewtonDiverged(
                    f"singular Newton update: {err}", last_iterate=z, residual=res
                ) from err
            lam = 1.0
            for _ in range(_MAX_BACKTRACKS):
                z_try = z + lam * step
                try:
                    res_try = float(
                        np.abs(self._forward_state(z_try[:n], z_try[n:]) - target).max()
                    )
                except ExcludedSetEntered:
                    res_try = np.inf
                if res_try < res:
                    z = z_try
                    break
                lam *= cfg.damping
            else:
                raise NewtonDiverged(
                    "damped Newton made no progress", last_iterate=z, residual=res
                )
        raise NewtonDiverged(
            f"no convergence within {cfg.max_iterations} iterations",
            last_iterate=z,
            residual=res,
        )

    # -- truncated series ------------------------------------------------------

    def series_forward(self, xt, yt, order: int) -> TangentBundlePoint:
        """Power-series forward map around xt = 0, truncated at ``order``.

        The x-part carries terms through the requested order (1, 2 or 3);
        the y-part is a second-order series, which is where the two chart
        kinds first differ.
        """
        if order not in (1, 2, 3):
            raise OrderUnsupported(f"series order must be 1, 2 or 3, got {order}")
        xt = np.asarray(xt, dtype=float)
        yt = np.asarray(yt, dtype=float)
        center = bundle_point(self.base, yt)
        need_deep = order == 3 or (self.kind == "standard" and order >= 2)
        ev = (
            self.connection.evaluate_deep(center)
            if need_deep
            else self.connection.evaluate(center)
        )

        cubic = (
            ev.delta_dN - 2.0 * np.einsum("qbr,rdc->qbcd", ev.dN_y, ev.dN_y)
            if need_deep
            else None
        )

        x = self.base + xt
        y = yt - ev.N @ xt
        if order >= 2:
            x = x - 0.5 * np.einsum("qbc,b,c->q", ev.dN_y, xt, xt)
            if self.kind == "extended":
                quad = ev.delta_N - np.einsum("qa,acb->qbc", ev.N, ev.dN_y)
                y = y - 0.5 * np.einsum("qbc,b,c->q", quad, xt, xt)
            else:
                # y = J(xt) yt with J the xt-derivative series of the x-part
                amat = _sym_pair(ev.dN_y)
                smat = _sym_triple(cubic)
                jac = (
                    np.eye(self.dimension)
                    - np.einsum("qpc,c->qp", amat, xt)
                    - 0.5 * np.einsum("qpcd,c,d->qp", smat, xt, xt)
                )
                y = jac @ yt
        if order == 3:
            x = x - np.einsum("qbcd,b,c,d->q", cubic, xt, xt, xt) / 6.0
        return bundle_point(x, y)

    def jacobian_series(self, yt) -> ChartJacobianSeries:
        """Zeroth- and first-order blocks of the chart Jacobian at xt = 0."""
        yt = np.asarray(yt, dtype=float)
        n = self.dimension
        center = bundle_point(self.base, yt)
        ev = (
            self.connection.evaluate_deep(center)
            if self.kind == "standard"
            else self.connection.evaluate(center)
        )
        eye = np.eye(n)
        zeros_lin = np.zeros((n, n, n))
        # A[q, p, c] = symmetrized fiber derivative, the x-part's linear term
        amat = _sym_pair(ev.dN_y)

        if self.kind == "extended":
            dy_dxt = -ev.N.copy()
            dy_dxt_lin = -_sym_pair(ev.delta_N) + _sym_pair(
                np.einsum("qa,acb->qbc", ev.N, ev.dN_y)
            )
            dy_dyt_lin = -np.transpose(ev.dN_y, (0, 2, 1))
        else:
            cubic = ev.delta_dN - 2.0 * np.einsum("qbr,rdc->qbcd", ev.dN_y, ev.dN_y)
            smat = _sym_triple(cubic)
            dy_dxt = -np.einsum("qpb,p->qb", amat, yt)
            dy_dxt_lin = -np.einsum("qpbc,p->qbc", smat, yt)
            # the fiber derivative of J contracted with yt drops out for
            # homogeneous symmetric connections, leaving J's own linear term
            dy_dyt_lin = -amat

        return ChartJacobianSeries(
            kind=self.kind,
            dx_dxt=eye,
            dx_dyt=np.zeros((n, n)),
            dy_dxt=dy_dxt,
            dy_dyt=eye.copy(),
            dx_dxt_lin=-amat,
            dx_dyt_lin=zeros_lin,
            dy_dxt_lin=dy_dxt_lin,
            dy_dyt_lin=dy_dyt_lin,
        )

    # -- geometry in chart coordinates ------------------------------------------

    def connection_in_chart(self, xt, yt) -> np.ndarray:
        """Connection coefficients the chart sees at (xt, yt).

        The connection one-form is pushed through the full bundle coordinate
        change: with forward blocks (Xx, Xy, Yx, Yy) of (x, y) w.r.t.
        (xt, yt), the coefficients are the dxt-part of the transformed form,
            Ntilde = (inverse Jacobian, yt-y block) @ (Yx + N(image) Xx).
        All blocks come from the integrated map, never from the center
        identities being verified.
        """
        xt = np.asarray(xt, dtype=float)
        yt = np.asarray(yt, dtype=float)
        self._check_trust(xt)
        conn = self.connection
        n = self.dimension

        end, dxdu, dydu, dxdv, dydv = exp_map_with_jacobian(
            conn, self.base, xt, yt, wrt="uv", controls=self.controls
        )
        if self.kind == "extended":
            img = end
            xx, xy, yx, yy = dxdu, dxdv, dydu, dydv
        else:
            img = bundle_point(end.x, dxdu @ yt)
            xx, xy = dxdu, dxdv
            h1, h2 = JACOBIAN_FD_STEPS

            def y_of_xt(w):
                _, jac, _, _, _ = exp_map_with_jacobian(
                    conn, self.base, w, yt, wrt="u", controls=self.controls
                )
                return jac @ yt

            def y_of_yt(w):
                _, jac, _, _, _ = exp_map_with_jacobian(
                    conn, self.base, xt, w, wrt="u", controls=self.controls
                )
                return jac @ w

            yx = richardson_gradient(y_of_xt, xt, h1, h2)
            yy = richardson_gradient(y_of_yt, yt, h1, h2)

        forward = np.block([[xx, xy], [yx, yy]])
        cond = float(np.linalg.cond(forward))
        if not np.isfinite(cond) or cond > JACOBIAN_CONDITION_LIMIT:
            raise SingularJacobian(
                f"chart Jacobian condition number {cond:.3e} at |xt| = "
                f"{float(np.linalg.norm(xt)):.4g}"
            )
        inverse = np.linalg.inv(forward)
        try:
            n_img = conn.coefficients(img)
        except (NearZeroDirection, NearDegenerateMetric) as err:
            raise ExcludedSetEntered(f"image point left the admissible set: {err}") from err
        return inverse[n:, n:] @ (yx + n_img @ xx)

    def _require_lagrangian(self):
        if self.connection.lagrangian is None:
            raise FinslerKitError(
                "this chart operation needs a Lagrangian-backed connection"
            )
        return self.connection.lagrangian

    def _hessian_xt(self, yt: np.ndarray) -> np.ndarray:
        """xt-Hessian of the scalar function the chart induces from L."""
        model = self._require_lagrangian()

        def f(xt):
            return model.evaluate(self.to_manifold(xt, yt))

        h1, h2 = LAGRANGIAN_FD_STEPS
        return richardson_hessian(f, np.zeros(self.dimension), h1, h2)

    def lagrangian_in_chart(self, yt) -> ChartLagrangian:
        """Value, xt-gradient and xt-Hessian of the Lagrangian at xt = 0."""
        yt = np.asarray(yt, dtype=float)
        model = self._require_lagrangian()
        value = model.evaluate(bundle_point(self.base, yt))

        def f(xt):
            return model.evaluate(self.to_manifold(xt, yt))

        h1, h2 = LAGRANGIAN_FD_STEPS
        grad = richardson_gradient(f, np.zeros(self.dimension), h1, h2)
        return ChartLagrangian(value=value, grad_xt=grad, hess_xt=self._hessian_xt(yt))

    def _w_matrix(self, yv: np.ndarray) -> np.ndarray:
        """Inverse fiber metric contracted with the xt-Hessian at (0, yv)."""
        model = self._require_lagrangian()
        g = model.l_metric(bundle_point(self.base, yv))
        return np.linalg.solve(g, self._hessian_xt(yv))

    def curvature_in_chart(self, yt) -> np.ndarray:
        """Curvature tensor at the chart center from in-chart data only.

        Standard kind only: the xt-Hessian of the induced Lagrangian is
        contracted with the inverse fiber metric and antisymmetrized after a
        fiber derivative, R[a, b, c] = (dW[a, b, c] - dW[a, c, b]) / 2 with
        W the contracted Hessian.  No connection coefficients enter.
        """
        if self.kind != "standard":
            raise FinslerKitError("curvature reconstruction needs the standard kind")
        yt = np.asarray(yt, dtype=float)
        h1, h2 = FIBER_FD_STEPS
        dw = richardson_gradient(self._w_matrix, yt, h1, h2)
        return 0.5 * (dw - np.transpose(dw, (0, 2, 1)))

    # -- audit / export ----------------------------------------------------------

    def record(self, xt, yt) -> dict:
        """Round-trip audit record for one chart evaluation."""
        xt = np.asarray(xt, dtype=float)
        yt = np.asarray(yt, dtype=float)
        p = self.to_manifold(xt, yt)
        back_xt, back_yt = self.from_manifold(p)
        return {
            "kind": self.kind,
            "base": [float(v) for v in self.base],
            "x_tilde": [float(v) for v in xt],
            "y_tilde": [float(v) for v in yt],
            "x": [float(v) for v in p.x],
            "y": [float(v) for v in p.y],
            "residuals": {
                "round_trip_x_tilde": float(np.abs(back_xt - xt).max()),
                "round_trip_y_tilde": float(np.abs(back_yt - yt).max()),
            },
        }


def export_grid_csv(chart: AutoparallelChart, xt_rows, yt, target) -> None:
    """Evaluate the chart on a list of xt points and write a CSV table."""
    if hasattr(target, "write"):
        _write_grid_csv(chart, xt_rows, yt, target)
    else:
        with open(target, "w", newline="") as fh:
            _write_grid_csv(chart, xt_rows, yt, fh)


def _write_grid_csv(chart, xt_rows, yt, fh) -> None:
    yt = np.asarray(yt, dtype=float)
    n = chart.dimension
    header = (
        [f"xt{i + 1}" for i in range(n)]
        + [f"x{i + 1}" for i in range(n)]
        + [f"y{i + 1}" for i in range(n)]
    )
    writer = csv.writer(fh)
    writer.writerow(header)
    for xt in xt_rows:
        p = chart.to_manifold(np.asarray(xt, dtype=float), yt)
        writer.writerow(
            [repr(float(v)) for v in np.asarray(xt, dtype=float)]
            + [repr(float(v)) for v in p.x]
            + [repr(float(v)) for v in p.y]
        )
