"""Autoparallel integration, the exponential map, and its derivative blocks."""

import csv

import numpy as np
import pytest

from finslerkit.bundle import bundle_point
from finslerkit.connection import GeneralConnection
from finslerkit.dynamics import (
    IntegrationControls,
    exp_derivatives,
    exp_map,
    exp_map_with_jacobian,
    integrate_autoparallel,
    integrate_horizontal_autoparallel,
)
from finslerkit.errors import ExcludedSetEntered, StepSizeUnderflow
from finslerkit.integrate import solve_ode
from finslerkit.models import load_model

TIGHT = IntegrationControls(rtol=1e-12, atol=1e-13)


def conn_for(name):
    return GeneralConnection.cartan(load_model(f"builtin:{name}"))


# -- integrator ----------------------------------------------------------------


def test_oscillator_round_trip_and_dense_output():
    f = lambda t, z: np.array([z[1], -z[0]])
    sol = solve_ode(f, 0.0, np.array([1.0, 0.0]), 2 * np.pi)
    assert np.abs(sol.state_end - [1.0, 0.0]).max() < 1e-9
    for t in np.linspace(0.3, 6.0, 17):
        assert abs(sol(t)[0] - np.cos(t)) < 1e-9
        assert abs(sol.derivative(t)[0] + np.sin(t)) < 1e-7


def test_backward_time_integration():
    f = lambda t, z: np.array([z[1], -z[0]])
    sol = solve_ode(f, 0.0, np.array([1.0, 0.0]), -1.3)
    assert abs(sol.state_end[0] - np.cos(1.3)) < 1e-9
    assert abs(sol(-0.7)[0] - np.cos(0.7)) < 1e-9


def test_blow_up_raises_step_underflow():
    f = lambda t, z: z**2
    with pytest.raises(StepSizeUnderflow):
        solve_ode(f, 0.0, np.array([1.0]), 1.5)


# -- autoparallel lifts ----------------------------------------------------------


def test_flat_lift_is_a_straight_line():
    conn = conn_for("flat4d")
    x0 = np.array([0.3, -1.0, 2.0, 0.5])
    u = np.array([1.0, 0.25, -0.5, 1.5])
    traj = integrate_autoparallel(conn, x0, u, 2.0)
    assert np.abs(traj.endpoint.x - (x0 + 2.0 * u)).max() < 1e-13
    assert np.abs(traj.endpoint.y - u).max() < 1e-13
    mid = traj.state(0.77)
    assert np.abs(mid.x - (x0 + 0.77 * u)).max() < 1e-12


def test_polar_geodesic_reaches_known_point():
    # the straight line x = 1, parameterized by arclength, in polar coordinates
    conn = conn_for("polar2d")
    traj = integrate_autoparallel(conn, [1.0, 0.0], [0.0, 1.0], 1.0, TIGHT)
    assert np.abs(traj.endpoint.x - [np.sqrt(2.0), np.pi / 4]).max() < 1e-8
    assert np.abs(traj.endpoint.y - [np.sqrt(2.0) / 2, 0.5]).max() < 1e-8


def test_energy_constant_along_lift():
    model = load_model("builtin:polar2d")
    conn = GeneralConnection.cartan(model)
    traj = integrate_autoparallel(conn, [1.0, 0.0], [0.0, 1.0], 1.0, TIGHT)
    values = [
        model.evaluate(traj.state(t)) for t in np.linspace(0.0, 1.0, 11)
    ]
    assert np.abs(np.array(values) - values[0]).max() < 1e-9 * max(1.0, abs(values[0]))


def test_lift_rescaling_property():
    # gamma_{alpha u}(t) == gamma_u(alpha t)
    conn = conn_for("randers2d")
    x0, u, alpha = np.array([0.2, -0.1]), np.array([0.9, 0.5]), 0.7
    a = integrate_autoparallel(conn, x0, alpha * u, 1.0, TIGHT)
    b = integrate_autoparallel(conn, x0, u, alpha, TIGHT)
    assert np.abs(a.endpoint.x - b.endpoint.x).max() < 1e-8
    assert np.abs(a.endpoint.y - alpha * b.endpoint.y).max() < 1e-8


def test_lift_into_coordinate_singularity_is_caught():
    # a straight line passing within 1e-6 of the origin: the angular fiber
    # metric component r^2 degenerates and the excluded-set guard must fire
    conn = conn_for("polar2d")
    x0 = np.array([1.0, 0.0])
    b = 1e-6
    u = np.array([-1.0, b])  # tiny angular momentum, r_min ~ b
    with pytest.raises((ExcludedSetEntered, StepSizeUnderflow)):
        integrate_autoparallel(conn, x0, u, 2.0)


# -- horizontal transport ---------------------------------------------------------


def test_flat_horizontal_transport_is_trivial():
    conn = conn_for("flat4d")
    x0 = np.zeros(4)
    u = np.array([1.0, 0.2, 0.0, -0.4])
    v = np.array([0.5, -1.0, 2.0, 0.1])
    traj = integrate_horizontal_autoparallel(conn, x0, u, v, 1.0)
    assert np.abs(traj.endpoint.x - u).max() < 1e-13
    assert np.abs(traj.endpoint.y - v).max() < 1e-13


def test_horizontal_with_matching_fiber_reduces_to_lift():
    # when v = u the fiber stays glued to the velocity (degree-1 homogeneity)
    conn = conn_for("polar2d")
    x0, u = np.array([1.0, 0.0]), np.array([0.3, 1.0])
    hor = integrate_horizontal_autoparallel(conn, x0, u, u, 1.0, TIGHT)
    lift = integrate_autoparallel(conn, x0, u, 1.0, TIGHT)
    assert np.abs(hor.endpoint.x - lift.endpoint.x).max() < 1e-9
    assert np.abs(hor.endpoint.y - lift.endpoint.y).max() < 1e-9


def test_horizontality_residual_is_small():
    conn = conn_for("randers2d")
    traj = integrate_horizontal_autoparallel(
        conn, [0.1, -0.2], [1.0, 0.3], [0.4, 1.1], 1.0
    )
    assert traj.diagnostics.max_horizontality_residual < 1e-6
    assert traj.diagnostics.rejected <= traj.diagnostics.accepted


def test_horizontal_rescaling_property():
    # EXP(alpha u, v) equals the (u, v)-curve evaluated at t = alpha
    conn = conn_for("randers2d")
    x0, u, v = np.array([0.2, -0.1]), np.array([0.8, 0.4]), np.array([1.0, -0.3])
    alpha = 0.6
    short = exp_map(conn, x0, alpha * u, v, TIGHT)
    full = integrate_horizontal_autoparallel(conn, x0, u, v, 1.0, TIGHT)
    at_alpha = full.state(alpha)
    assert np.abs(short.x - at_alpha.x).max() < 1e-8
    assert np.abs(short.y - at_alpha.y).max() < 1e-8


# -- exponential map ---------------------------------------------------------------


def test_exp_with_zero_base_velocity_is_identity():
    conn = conn_for("randers2d")
    x0, v = np.array([0.3, 0.7]), np.array([0.9, -0.2])
    p = exp_map(conn, x0, np.zeros(2), v)
    assert np.abs(p.x - x0).max() < 1e-12
    assert np.abs(p.y - v).max() < 1e-12


def test_polar_exp_closed_form():
    conn = conn_for("polar2d")
    p = exp_map(conn, [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], TIGHT)
    assert np.abs(p.x - [np.sqrt(2.0), np.pi / 4]).max() < 1e-8
    assert np.abs(p.y - [np.sqrt(2.0) / 2, 0.5]).max() < 1e-8


def test_exp_first_derivative_blocks():
    conn = conn_for("randers2d")
    x0, v = np.array([0.2, -0.3]), np.array([1.0, 0.4])
    d = exp_derivatives(conn, x0, v)
    N = conn.coefficients(bundle_point(x0, v))
    assert np.abs(d.dx_du - np.eye(2)).max() == 0.0
    assert np.abs(d.dx_dv).max() == 0.0
    assert np.abs(d.dy_dv - np.eye(2)).max() == 0.0
    assert np.abs(d.dy_du + N).max() < 1e-14

    # cross-check the -N block against finite differences of the flow
    h1, h2 = 1e-2, 1e-3
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1.0

        def diff(h):
            p = exp_map(conn, x0, h * e, v, TIGHT)
            m = exp_map(conn, x0, -h * e, v, TIGHT)
            return (p.y - m.y) / (2 * h)

        rich = (diff(h2) * (h1 / h2) ** 2 - diff(h1)) / ((h1 / h2) ** 2 - 1.0)
        assert np.abs(rich - d.dy_du[:, j]).max() < 1e-5 * (1 + np.abs(N).max())


@pytest.mark.parametrize(
    "name,x0,v",
    [
        ("randers2d", [0.2, -0.3], [1.0, 0.4]),
        ("polar2d", [1.3, 0.2], [0.6, 0.8]),
    ],
)
def test_exp_higher_derivative_blocks_match_finite_differences(name, x0, v):
    conn = conn_for(name)
    x0, v = np.asarray(x0, float), np.asarray(v, float)
    n = conn.dimension
    d = exp_derivatives(conn, x0, v)
    base = exp_map(conn, x0, np.zeros(n), v, TIGHT)
    rng = np.random.default_rng(41)

    def along(h, w):
        return exp_map(conn, x0, h * w, v, TIGHT)

    for _ in range(3):
        w = rng.normal(size=n)
        w /= np.linalg.norm(w)

        def dir2(h):
            p, m = along(h, w), along(-h, w)
            return (p.x - 2 * base.x + m.x) / h**2, (p.y - 2 * base.y + m.y) / h**2

        a1, a2 = dir2(2e-2), dir2(1e-2)
        fd_x = (4 * a2[0] - a1[0]) / 3
        fd_y = (4 * a2[1] - a1[1]) / 3
        cl_x = np.einsum("qbc,b,c->q", d.d2x_duu, w, w)
        cl_y = np.einsum("qbc,b,c->q", d.d2y_duu, w, w)
        assert np.abs(fd_x - cl_x).max() < 1e-5 * (1 + np.abs(cl_x).max())
        assert np.abs(fd_y - cl_y).max() < 1e-5 * (1 + np.abs(cl_y).max())

        def dir3(h):
            p2, p1 = along(2 * h, w), along(h, w)
            m1, m2 = along(-h, w), along(-2 * h, w)
            return (p2.x - 2 * p1.x + 2 * m1.x - m2.x) / (2 * h**3)

        b1, b2 = dir3(4e-2), dir3(2e-2)
        fd_3 = (4 * b2 - b1) / 3
        cl_3 = np.einsum("qbcd,b,c,d->q", d.d3x_duuu, w, w, w)
        assert np.abs(fd_3 - cl_3).max() < 1e-5 * (1 + np.abs(cl_3).max())


def test_exp_derivative_blocks_are_symmetric():
    conn = conn_for("randers2d")
    d = exp_derivatives(conn, [0.1, 0.4], [0.7, -0.6])
    assert np.abs(d.d2x_duu - np.transpose(d.d2x_duu, (0, 2, 1))).max() < 1e-14
    assert np.abs(d.d2y_duu - np.transpose(d.d2y_duu, (0, 2, 1))).max() < 1e-14
    for perm in [(0, 1, 3, 2), (0, 2, 1, 3), (0, 3, 2, 1)]:
        assert np.abs(d.d3x_duuu - np.transpose(d.d3x_duuu, perm)).max() < 1e-14


def test_exp_jacobian_from_variational_flow():
    conn = conn_for("randers2d")
    x0, u, v = np.array([0.2, -0.3]), np.array([0.5, 0.9]), np.array([1.0, 0.4])
    p, dxdu, dydu, dxdv, dydv = exp_map_with_jacobian(conn, x0, u, v, controls=TIGHT)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        pu = exp_map(conn, x0, u + e, v, TIGHT)
        mu = exp_map(conn, x0, u - e, v, TIGHT)
        assert np.abs((pu.x - mu.x) / (2 * h) - dxdu[:, j]).max() < 1e-7
        assert np.abs((pu.y - mu.y) / (2 * h) - dydu[:, j]).max() < 1e-7
        pv = exp_map(conn, x0, u, v + e, TIGHT)
        mv = exp_map(conn, x0, u, v - e, TIGHT)
        assert np.abs((pv.x - mv.x) / (2 * h) - dxdv[:, j]).max() < 1e-7
        assert np.abs((pv.y - mv.y) / (2 * h) - dydv[:, j]).max() < 1e-7


# -- trajectory container -----------------------------------------------------------


def test_trajectory_csv_round_trip(tmp_path):
    conn = conn_for("polar2d")
    traj = integrate_autoparallel(conn, [1.0, 0.0], [0.0, 1.0], 0.5)
    out = tmp_path / "curve.csv"
    traj.to_csv(out)
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "y1", "y2"]
    assert len(rows) == len(traj.ts) + 1
    k = len(rows) // 2
    assert float(rows[k][1]) == pytest.approx(traj.xs[k - 1][0], abs=0)


def test_dense_state_matches_stored_nodes():
    conn = conn_for("randers2d")
    traj = integrate_horizontal_autoparallel(
        conn, [0.0, 0.0], [1.0, 0.2], [0.8, -0.1], 1.0
    )
    for k in (0, len(traj.ts) // 2, len(traj.ts) - 1):
        p = traj.state(traj.ts[k])
        assert np.abs(p.x - traj.xs[k]).max() < 1e-12
        assert np.abs(p.y - traj.ys[k]).max() < 1e-12
