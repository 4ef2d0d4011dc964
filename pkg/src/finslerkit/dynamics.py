"""Autoparallel curves, horizontal transport, and the bundle exponential map.

Two flavours of curve are integrated:

* the *canonical lift* x'' + N(x, x') x' = 0 of Def-1 type, whose state is
  (x, u = x');
* the *horizontal autoparallel* pair
      y' = -N(x, y) x',      x''^a = -(d/dy^c N^a_b)(x, y) x'^b x'^c,
  whose state is (x, y, u) and whose time-one map is the exponential map
  EXP(u, v) = (x(1), y(1)) anchored at (x0, v).

The first variational equations ride along on demand: for requested seed
columns J(0) the block system J' = A(t) J is integrated with the exact
A assembled from second derivatives of N, giving flow Jacobians to
integrator accuracy (no finite differencing of the flow).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .bundle import (
    DEGENERACY_CONDITION_LIMIT,
    ZERO_DIRECTION_GUARD,
    TangentBundlePoint,
    bundle_point,
)
from .connection import GeneralConnection
from .errors import ExcludedSetEntered, NearDegenerateMetric, NearZeroDirection
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, OdeSolution, solve_ode


@dataclass
class IntegrationControls:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    max_steps: int = 100_000
    first_step: float | None = None


@dataclass
class TrajectoryDiagnostics:
    accepted: int
    rejected: int
    field_evals: int
    max_step_error: float
    max_horizontality_residual: float | None = None


@dataclass
class Trajectory:
    """Sampled integral curve on TM with dense access to the full state."""

    kind: str  # "lift" or "horizontal"
    dimension: int
    ts: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    diagnostics: TrajectoryDiagnostics
    solution: OdeSolution

    def point(self, index: int) -> TangentBundlePoint:
        return bundle_point(self.xs[index], self.ys[index])

    def state(self, t: float) -> TangentBundlePoint:
        n = self.dimension
        z = self.solution(t)
        return bundle_point(z[:n], z[n : 2 * n])

    @property
    def endpoint(self) -> TangentBundlePoint:
        return self.point(len(self.ts) - 1)

    def to_csv(self, target) -> None:
        """Write samples as ``t, x1..xn, y1..yn`` rows to a path or handle."""
        if hasattr(target, "write"):
            self._write_csv(target)
        else:
            with open(target, "w", newline="") as fh:
                self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        n = self.dimension
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)]
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, t in enumerate(self.ts):
            writer.writerow(
                [repr(float(t))]
                + [repr(float(v)) for v in self.xs[i]]
                + [repr(float(v)) for v in self.ys[i]]
            )


def _guard_for(conn: GeneralConnection, n: int, y_slice: slice):
    """Excluded-set guard run at accepted steps: zero section + degeneracy."""

    def guard(t, z):
        y = z[y_slice]
        if float(np.linalg.norm(y)) < ZERO_DIRECTION_GUARD:
            raise ExcludedSetEntered(f"fiber direction collapsed to zero at t = {t:.6g}")
        if conn.lagrangian is not None:
            x = z[:n]
            try:
                g = conn.lagrangian.l_metric(bundle_point(x, y))
            except (NearZeroDirection, NearDegenerateMetric) as err:
                raise ExcludedSetEntered(str(err)) from err
            cond = float(np.linalg.cond(g))
            if not np.isfinite(cond) or cond > DEGENERACY_CONDITION_LIMIT:
                raise ExcludedSetEntered(
                    f"L-metric condition number {cond:.3e} at t = {t:.6g}"
                )

    return guard


def _reraise_excluded(err):
    raise ExcludedSetEntered(f"connection evaluation failed: {err}") from err


def integrate_autoparallel(
    conn: GeneralConnection,
    x0,
    u,
    t_end: float,
    controls: IntegrationControls | None = None,
) -> Trajectory:
    """Canonical-lift autoparallel x'' + N(x, x') x' = 0 on [0, t_end]."""
    controls = controls or IntegrationControls()
    n = conn.dimension
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)

    def rhs(t, z):
        x, v = z[:n], z[n:]
        try:
            N = conn.coefficients(bundle_point(x, v))
        except (NearZeroDirection, NearDegenerateMetric) as err:
            _reraise_excluded(err)
        return np.concatenate([v, -N @ v])

    sol = solve_ode(
        rhs,
        0.0,
        np.concatenate([x0, u]),
        t_end,
        rtol=controls.rtol,
        atol=controls.atol,
        guard=_guard_for(conn, n, slice(n, 2 * n)),
        max_steps=controls.max_steps,
        first_step=controls.first_step,
    )
    return Trajectory(
        kind="lift",
        dimension=n,
        ts=sol.ts,
        xs=sol.states[:, :n],
        ys=sol.states[:, n:],
        diagnostics=TrajectoryDiagnostics(
            sol.naccepted, sol.nrejected, sol.nfev, sol.max_error_norm
        ),
        solution=sol,
    )


def _horizontal_rhs(conn: GeneralConnection):
    n = conn.dimension

    def rhs(t, z):
        x, y, u = z[:n], z[n : 2 * n], z[2 * n :]
        try:
            ev = conn.evaluate(bundle_point(x, y))
        except (NearZeroDirection, NearDegenerateMetric) as err:
            _reraise_excluded(err)
        xdd = -np.einsum("abc,b,c->a", ev.dN_y, u, u)
        return np.concatenate([u, -ev.N @ u, xdd])

    return rhs


def integrate_horizontal_autoparallel(
    conn: GeneralConnection,
    x0,
    u,
    v,
    t_end: float,
    controls: IntegrationControls | None = None,
) -> Trajectory:
    """Horizontal autoparallel with base velocity u and fiber anchor v.

    The trajectory carries state (x, y, u); the returned samples are the
    bundle points (x, y), and the diagnostics include the largest
    horizontality residual |y' + N(x, y) x'| (scaled) of the continuous
    extension measured at segment midpoints.
    """
    controls = controls or IntegrationControls()
    n = conn.dimension
    z0 = np.concatenate(
        [np.asarray(x0, float), np.asarray(v, float), np.asarray(u, float)]
    )
    sol = solve_ode(
        _horizontal_rhs(conn),
        0.0,
        z0,
        t_end,
        rtol=controls.rtol,
        atol=controls.atol,
        guard=_guard_for(conn, n, slice(n, 2 * n)),
        max_steps=controls.max_steps,
        first_step=controls.first_step,
    )

    max_resid = 0.0
    for t_left, hs, _ in sol.segments:
        tm = t_left + 0.5 * hs
        z = sol(tm)
        dz = sol.derivative(tm)
        x, y = z[:n], z[n : 2 * n]
        if float(np.linalg.norm(y)) < ZERO_DIRECTION_GUARD:
            continue
        N = conn.coefficients(bundle_point(x, y))
        resid = dz[n : 2 * n] + N @ dz[:n]
        scale = 1.0 + float(np.abs(N @ dz[:n]).max())
        max_resid = max(max_resid, float(np.abs(resid).max()) / scale)

    return Trajectory(
        kind="horizontal",
        dimension=n,
        ts=sol.ts,
        xs=sol.states[:, :n],
        ys=sol.states[:, n : 2 * n],
        diagnostics=TrajectoryDiagnostics(
            sol.naccepted,
            sol.nrejected,
            sol.nfev,
            sol.max_error_norm,
            max_horizontality_residual=max_resid,
        ),
        solution=sol,
    )


def exp_map(
    conn: GeneralConnection,
    base,
    u,
    v,
    controls: IntegrationControls | None = None,
) -> TangentBundlePoint:
    """Time-one point of the horizontal autoparallel: EXP_base(u, v)."""
    traj = integrate_horizontal_autoparallel(conn, base, u, v, 1.0, controls)
    return traj.endpoint


@dataclass
class ExpDerivatives:
    """Closed-form derivative blocks of (u, v) -> EXP(u, v) at u = 0.

    Layout: first-derivative blocks are (n, n) matrices; ``d2*_duu`` are
    (n, b, c) and ``d3x_duuu`` is (n, b, c, d), symmetric in the lower slots.
    """

    dx_du: np.ndarray
    dy_du: np.ndarray
    dx_dv: np.ndarray
    dy_dv: np.ndarray
    d2x_duu: np.ndarray
    d2y_duu: np.ndarray
    d3x_duuu: np.ndarray


def exp_derivatives(conn: GeneralConnection, base, v) -> ExpDerivatives:
    """Derivative blocks of the exponential map at (0, v), from one deep eval.

    Valid for homogeneous symmetric connections (the canonical construction
    always qualifies); the third-derivative block symmetrizes its two product
    terms accordingly.
    """
    n = conn.dimension
    deep = conn.evaluate_deep(bundle_point(np.asarray(base, float), np.asarray(v, float)))
    eye = np.eye(n)

    d2x = -0.5 * (deep.dN_y + np.transpose(deep.dN_y, (0, 2, 1)))

    term = -deep.delta_N + np.einsum("qa,abc->qbc", deep.N, deep.dN_y)
    d2y = 0.5 * (term + np.transpose(term, (0, 2, 1)))

    raw = -deep.delta_dN + 2.0 * np.einsum("qbr,rdc->qbcd", deep.dN_y, deep.dN_y)
    d3x = np.zeros((n, n, n, n))
    perms = [(1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1)]
    for perm in perms:
        d3x += np.transpose(raw, (0,) + perm)
    d3x /= 6.0

    return ExpDerivatives(
        dx_du=eye,
        dy_du=-deep.N.copy(),
        dx_dv=np.zeros((n, n)),
        dy_dv=eye,
        d2x_duu=d2x,
        d2y_duu=d2y,
        d3x_duuu=d3x,
    )


# -- variational flow ----------------------------------------------------------


def _variational_matrix(deep, u: np.ndarray, n: int) -> np.ndarray:
    """A(z) with z = (x, y, u) for the horizontal autoparallel field."""
    A = np.zeros((3 * n, 3 * n))
    A[0:n, 2 * n : 3 * n] = np.eye(n)
    # y' = -N(x, y) u
    A[n : 2 * n, 0:n] = -np.einsum("abc,b->ac", deep.dN_x, u)
    A[n : 2 * n, n : 2 * n] = -np.einsum("abc,b->ac", deep.dN_y, u)
    A[n : 2 * n, 2 * n :] = -deep.N
    # u' = -(d/dy^c N^a_b) u^b u^c
    A[2 * n :, 0:n] = -np.einsum("abcd,b,c->ad", deep.ddN_xy, u, u)
    A[2 * n :, n : 2 * n] = -np.einsum("abcd,b,c->ad", deep.ddN_yy, u, u)
    A[2 * n :, 2 * n :] = -(
        np.einsum("adb,b->ad", deep.dN_y, u) + np.einsum("abd,b->ad", deep.dN_y, u)
    )
    return A


def flow_with_jacobian(
    conn: GeneralConnection,
    x0,
    u,
    v,
    seeds: np.ndarray,
    t_end: float = 1.0,
    controls: IntegrationControls | None = None,
):
    """Integrate the horizontal flow plus J' = A J for the given seed columns.

    ``seeds`` is a (3n, k) matrix of initial-condition derivatives.  Returns
    ``(solution, k)``; the state layout is (x, y, u, J.flat).
    """
    controls = controls or IntegrationControls()
    n = conn.dimension
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[0] != 3 * n:
        raise ValueError(f"seed columns must have 3n = {3 * n} rows")
    k = seeds.shape[1]

    def rhs(t, z):
        x, y, uu = z[:n], z[n : 2 * n], z[2 * n : 3 * n]
        J = z[3 * n :].reshape(3 * n, k)
        try:
            deep = conn.evaluate_deep(bundle_point(x, y))
        except (NearZeroDirection, NearDegenerateMetric) as err:
            _reraise_excluded(err)
        base = np.concatenate(
            [uu, -deep.N @ uu, -np.einsum("abc,b,c->a", deep.dN_y, uu, uu)]
        )
        A = _variational_matrix(deep, uu, n)
        return np.concatenate([base, (A @ J).ravel()])

    z0 = np.concatenate(
        [np.asarray(x0, float), np.asarray(v, float), np.asarray(u, float), seeds.ravel()]
    )
    sol = solve_ode(
        rhs,
        0.0,
        z0,
        t_end,
        rtol=controls.rtol,
        atol=controls.atol,
        guard=_guard_for(conn, n, slice(n, 2 * n)),
        max_steps=controls.max_steps,
        first_step=controls.first_step,
    )
    return sol, k


def exp_map_with_jacobian(
    conn: GeneralConnection,
    base,
    u,
    v,
    wrt: str = "uv",
    controls: IntegrationControls | None = None,
):
    """EXP(u, v) together with exact blocks of its (u, v)-Jacobian.

    ``wrt``: "u", "v" or "uv" selects which directional seeds to carry.
    Returns (endpoint, dxdu, dydu, dxdv, dydv) with unused blocks None.
    """
    n = conn.dimension
    cols = []
    if "u" in wrt:
        su = np.zeros((3 * n, n))
        su[2 * n :, :] = np.eye(n)
        cols.append(su)
    if "v" in wrt:
        sv = np.zeros((3 * n, n))
        sv[n : 2 * n, :] = np.eye(n)
        cols.append(sv)
    seeds = np.hstack(cols)
    sol, k = flow_with_jacobian(conn, base, u, v, seeds, 1.0, controls)
    zf = sol.state_end
    endpoint = bundle_point(zf[:n], zf[n : 2 * n])
    J = zf[3 * n :].reshape(3 * n, k)
    dxdu = dydu = dxdv = dydv = None
    col = 0
    if "u" in wrt:
        dxdu = J[:n, col : col + n]
        dydu = J[n : 2 * n, col : col + n]
        col += n
    if "v" in wrt:
        dxdv = J[:n, col : col + n]
        dydv = J[n : 2 * n, col : col + n]
    return endpoint, dxdu, dydu, dxdv, dydv
