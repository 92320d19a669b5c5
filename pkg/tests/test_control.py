import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deltarobot.allocation import build_allocation
from deltarobot.control import (
    Controller,
    ControllerConfig,
    GainSet,
    LocomotionMode,
    Measurement,
    Targets,
    attitude_error,
    build_rolling_qp,
    build_standing_qp,
    flight_force,
    flight_torque,
    gravity_moment,
    ground_torque,
    update_mode,
)
from deltarobot.geometry import axis_angle, rot_x, rot_z, zxz_from_angles
from deltarobot.qp import kkt_residuals, solve
from deltarobot.robot_model import ModeError, contact_point, forward_kinematics

from conftest import TRIANGLE, random_rotation
from test_qp import enumerate_active_sets

ZERO = GainSet(att_p=(0, 0, 0), att_i=(0, 0, 0), att_d=(0, 0, 0), pos_p=(0, 0, 0), pos_i=(0, 0, 0), pos_d=(0, 0, 0))
MARGIN = 1e-6


def _ground(model, R):
    fr = contact_point(model, forward_kinematics(model, TRIANGLE, cog_pose=(R, np.zeros(3))))
    return fr, build_allocation(fr, model, "cp")


def test_attitude_error_examples(rng):
    e = attitude_error(np.eye(3), np.eye(3), np.zeros(3), np.zeros(3))
    assert not np.any(e.e_R) and not np.any(e.e_w)
    for psi in np.linspace(-3, 3, 13):
        np.testing.assert_allclose(attitude_error(np.eye(3), rot_z(psi), np.zeros(3), np.zeros(3)).e_R, [0, 0, math.sin(psi)], atol=1e-15)
    anti = attitude_error(np.eye(3), rot_z(math.pi), np.zeros(3), np.zeros(3))
    assert anti.degenerate and np.allclose(anti.e_R, 0.0, atol=1e-15)


def test_attitude_error_antisymmetric(rng):
    for _ in range(50):
        A, B = random_rotation(rng), random_rotation(rng)
        np.testing.assert_allclose(attitude_error(A, B, np.zeros(3), np.zeros(3)).e_R, -attitude_error(B, A, np.zeros(3), np.zeros(3)).e_R, atol=1e-15)


def test_angular_velocity_error(rng):
    R, Rd, w, wd = random_rotation(rng), random_rotation(rng), rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(attitude_error(R, Rd, w, wd).e_w, R.T @ Rd @ wd - w, atol=1e-15)


def test_flight_torque_examples():
    inertia = np.diag([1.0, 2.0, 3.0])
    z = np.zeros(3)
    assert not np.any(flight_torque(z, z, z, inertia, z, GainSet()))
    np.testing.assert_allclose(flight_torque(z, z, z, inertia, [0, 0, 1], GainSet()), 0.0, atol=1e-16)
    # (1,1,0) x (1,2,0) = (0, 0, 1)
    np.testing.assert_allclose(flight_torque(z, z, z, inertia, [1, 1, 0], GainSet()), [0, 0, 1], atol=1e-16)
    g = GainSet(att_p=(10, 0, 0), att_i=(0, 0, 0), att_d=(0, 0, 0))
    tau = flight_torque([0.1, 0, 0], z, z, np.diag([0.132, 0.151, 0.271]), z, g)
    assert tau[0] == pytest.approx(0.132, abs=1e-15)


def test_flight_force_examples():
    z = np.zeros(3)
    bias_only = flight_force(z, z, z, GainSet(), np.eye(3), 4.1, 9.81)
    np.testing.assert_allclose(bias_only, [0, 0, 4.1 * 9.81])
    g = GainSet(pos_p=(0, 0, 1), pos_i=(0, 0, 0), pos_d=(0, 0, 0))
    f = flight_force([0, 0, 1], z, z, g, np.eye(3), 4.1, 9.81)
    assert f[2] == pytest.approx(4.1 + 4.1 * 9.81)
    gx = GainSet(pos_p=(1, 1, 1), pos_i=(0, 0, 0), pos_d=(0, 0, 0))
    f = flight_force([1, 0, 0], z, z, gx, rot_z(math.pi / 2), 1.0, bias=False)
    np.testing.assert_allclose(f, [0, -1, 0], atol=1e-15)


def test_zero_gain_ground_torque_is_gravity_feedforward(rng):
    for _ in range(20):
        p, g_up, w0 = rng.normal(size=3), rng.normal(size=3), np.zeros(3)
        tau = ground_torque(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3), np.eye(3), w0, p, 4.1, g_up, ZERO)
        np.testing.assert_allclose(tau, np.cross(p, 4.1 * g_up), atol=1e-13)
        assert not np.any(flight_torque(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3), np.eye(3), w0, ZERO))


def test_gravity_moment_examples():
    assert not np.any(gravity_moment([0, 0, 0.4], 4.1, [0, 0, 9.81]))
    tau = gravity_moment([0.4, 0, 0], 4.1, [0, 0, 9.81])
    assert np.linalg.norm(tau) == pytest.approx(16.0884, abs=1e-4)
    assert tau[1] < 0 and tau[0] == 0 and tau[2] == 0


def test_qp_cost_is_exact_identity(model):
    _, alloc = _ground(model, rot_x(math.pi / 2))
    for build in (build_standing_qp, build_rolling_qp):
        p = build(np.zeros(3), alloc, rot_x(math.pi / 2), model.total_mass, model.gravity, 0.6)
        assert np.array_equal(p.P, 2.0 * np.eye(6))
        assert np.array_equal(p.P, p.P.T)


def test_standing_zero_torque_is_zero_thrust(model):
    R = zxz_from_angles(0.3, 1.2, 0.4)
    _, alloc = _ground(model, R)
    sol = solve(build_standing_qp(np.zeros(3), alloc, R, model.total_mass, model.gravity, 0.6))
    assert sol.solved
    np.testing.assert_allclose(sol.x, 0.0, atol=1e-9)


def test_standing_lift_limited(model):
    R = zxz_from_angles(0.0, 1.0, 0.2)
    _, alloc = _ground(model, R)
    mg = model.total_mass * model.gravity
    fz_row = (R @ alloc.trans)[2]
    gain = fz_row @ np.linalg.pinv(alloc.rot)
    tau = gain / (gain @ gain) * 1.5 * mg  # the minimum-norm thrust would lift 1.5 mg
    p = build_standing_qp(tau, alloc, R, model.total_mass, model.gravity, 0.6)
    sol = solve(p)
    assert sol.solved
    assert fz_row @ sol.x < mg
    assert p.objective(sol.x) > p.objective(np.linalg.pinv(alloc.rot) @ tau)
    assert p.objective(sol.x) == pytest.approx(enumerate_active_sets(p), abs=1e-6)
    assert np.any(sol.y_in > 1e-6)


def test_standing_without_friction(model, rng):
    R = zxz_from_angles(0.0, 1.3, -0.5)
    _, alloc = _ground(model, R)
    tau = rng.normal(size=3)
    p = build_standing_qp(tau, alloc, R, model.total_mass, model.gravity, 0.0)
    sol = solve(p)
    assert sol.solved
    f = R @ alloc.trans @ sol.x
    assert abs(f[0]) <= MARGIN + 1e-8 and abs(f[1]) <= MARGIN + 1e-8
    np.testing.assert_allclose(alloc.rot @ sol.x, tau, atol=1e-8)
    assert max(kkt_residuals(p, sol)[:2]) < 1e-8


def test_rolling_zero_torque_sits_on_margin(model):
    R = rot_x(math.pi / 2)
    _, alloc = _ground(model, R)
    p = build_rolling_qp(np.zeros(3), alloc, R, model.total_mass, model.gravity, 0.6, MARGIN)
    sol = solve(p)
    assert sol.solved
    assert np.all(sol.x[0::2] <= -MARGIN + 1e-12)
    assert np.max(sol.x[0::2]) == pytest.approx(-MARGIN, abs=1e-12)
    assert np.linalg.norm(sol.x) < 1e-5
    assert p.objective(sol.x) == pytest.approx(enumerate_active_sets(p), abs=1e-15)
    np.testing.assert_allclose(alloc.rot @ sol.x, 0.0, atol=1e-12)


def test_rolling_solution_points_outward(model, rng):
    R = zxz_from_angles(0.0, math.pi / 2, 0.7)
    _, alloc = _ground(model, R)
    for _ in range(20):
        p = build_rolling_qp(rng.normal(size=3), alloc, R, model.total_mass, model.gravity, 0.6, 0.5)
        sol = solve(p)
        if not sol.solved:
            continue
        assert np.all(sol.x[0::2] <= -0.5 + 1e-8)
        from deltarobot.allocation import components_to_command

        phi = components_to_command(sol.x, model.tilt).phi
        assert np.all((phi > 0) & (phi < math.pi))


def test_mode_switch_examples():
    S, Rl, F = LocomotionMode.STANDING, LocomotionMode.ROLLING, LocomotionMode.FLIGHT
    assert update_mode(S, math.pi / 2 - 0.1, 0.2) is Rl
    assert update_mode(S, 1.0, 0.2) is S
    assert update_mode(Rl, math.pi / 2 + 0.22, 0.2) is Rl
    assert update_mode(Rl, math.pi / 2 + 0.26, 0.2) is S
    assert update_mode(F, math.pi / 2, 0.2) is F


def test_hysteresis_prevents_chatter():
    rng = np.random.default_rng(7)
    mode, switches = LocomotionMode.STANDING, 0
    for tilt in math.pi / 2 - 0.2 + rng.uniform(-0.024, 0.024, size=10_000):
        new = update_mode(mode, tilt, 0.2, 0.05)
        switches += new is not mode
        mode = new
    assert switches == 1


def test_flight_never_goes_straight_to_rolling(model):
    ctrl = Controller(model)
    with pytest.raises(ModeError):
        ctrl.set_mode(LocomotionMode.ROLLING)
    ctrl.set_mode(LocomotionMode.STANDING)
    ctrl.set_mode(LocomotionMode.ROLLING)
    with pytest.raises(ModeError):
        ctrl.set_mode(LocomotionMode.FLIGHT)


def test_mode_switch_resets_integrators(model):
    ctrl = Controller(model)
    ctrl.state.att_integ = np.ones(3)
    ctrl.set_mode(LocomotionMode.STANDING)
    assert not np.any(ctrl.state.att_integ) and ctrl.state.mode_time == 0.0


def _hover(model):
    return Measurement(np.array([0, 0, 1.0]), np.zeros(3), np.eye(3), np.zeros(3), np.array(TRIANGLE))


def test_hover_command_is_gravity_share(model):
    ctrl = Controller(model)
    t = Targets(position=np.array([0, 0, 1.0]))
    for _ in range(50):  # the along-link feed-forward joins from the second step
        a = ctrl.control_step(_hover(model), t)
    b = ctrl.control_step(_hover(model), t)
    mg = model.total_mass * model.gravity
    assert a.command.thrust.sum() == pytest.approx(mg, rel=0.05)
    np.testing.assert_allclose(a.command.thrust, mg / 3, rtol=0.3)
    np.testing.assert_allclose(b.command.phi, a.command.phi, atol=1e-9)
    assert not b.rate_limited and not b.degraded


def test_vectoring_rate_clamp(model):
    cfg = ControllerConfig()
    ctrl = Controller(model, cfg)
    t = Targets(position=np.array([0, 0, 1.0]))
    phi0 = ctrl.control_step(_hover(model), t).command.phi
    ctrl.state.last_phi = phi0 + math.pi  # demand a half-turn
    out = ctrl.control_step(_hover(model), t)
    step = model.vectoring_speed_max * cfg.dt
    moved = np.abs(np.mod(out.command.phi - (phi0 + math.pi) + math.pi, 2 * math.pi) - math.pi)
    np.testing.assert_allclose(moved, step, atol=1e-12)
    assert out.rate_limited


def test_non_finite_measurement_rejected(model):
    m = _hover(model)
    m.w = np.array([np.nan, 0, 0])
    with pytest.raises(ValueError):
        Controller(model).control_step(m, Targets())


finite = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["flight", "standing", "rolling"]),
    st.lists(finite, min_size=3, max_size=3),
    st.floats(-math.pi, math.pi),
    st.lists(finite, min_size=3, max_size=3),
    st.lists(finite, min_size=3, max_size=3),
    st.floats(0.0, math.pi),
)
def test_outputs_finite_for_finite_inputs(model, mode, axis, angle, w, r, tilt):
    mode = LocomotionMode(mode)
    if mode is LocomotionMode.FLIGHT:
        R = axis_angle(np.array(axis) + [0, 0, 1e-3], angle)
    else:
        R = zxz_from_angles(angle, tilt, axis[0] * 3)
    ctrl = Controller(model, mode=mode)
    meas = Measurement(np.array(r), np.array(w), R, 3.0 * np.array(w), np.array(TRIANGLE))
    for _ in range(2):
        rep = ctrl.control_step(meas, Targets())
        for arr in (rep.command.thrust, rep.command.phi, rep.lam, rep.wrench):
            assert np.all(np.isfinite(arr))
        assert np.all(rep.command.thrust >= 0) and np.all(rep.command.thrust <= model.thrust_max + 1e-9)
