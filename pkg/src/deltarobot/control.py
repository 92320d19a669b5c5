"""Flight and ground controllers, mode switching and control distribution."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .allocation import (
    ActuatorCommand,
    AllocationError,
    AllocationMatrix,
    along_link_wrench,
    build_allocation,
    components_to_command,
    distribute_flight,
)
from .geometry import cross3, vee, wrap_angle, zxz_angles, zxz_from_angles
from .qp import QpProblem, QpSettings, QpSolution, QpSolver
from .robot_model import (
    ModeError,
    RobotModel,
    contact_point,
    forward_kinematics,
    inertia_at_cog,
    shift_inertia,
)


class LocomotionMode(enum.Enum):
    FLIGHT = "flight"
    STANDING = "standing"
    ROLLING = "rolling"


@dataclass(frozen=True)
class GainSet:
    att_p: tuple[float, float, float] = (80.0, 80.0, 80.0)
    att_i: tuple[float, float, float] = (8.0, 8.0, 8.0)
    att_d: tuple[float, float, float] = (8.0, 8.0, 8.0)
    pos_p: tuple[float, float, float] = (4.0, 4.0, 4.0)
    pos_i: tuple[float, float, float] = (0.5, 0.5, 0.5)
    pos_d: tuple[float, float, float] = (3.0, 3.0, 3.0)
    att_int_limit: float = 0.25
    pos_int_limit: float = 1.0

    def __post_init__(self):
        for name in ("att_p", "att_i", "att_d", "pos_p", "pos_i", "pos_d"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3 or min(v) < 0.0:
                raise ValueError(f"{name} must be three non-negative gains")
            object.__setattr__(self, name, v)
        if not (self.att_int_limit > 0.0 and self.pos_int_limit > 0.0):
            raise ValueError("integrator limits must be positive")


# overdamped on the ground: the vectoring servos need time to swing the thrust
# direction, so the body must not arrive upright with much angular speed
GROUND_GAINS = GainSet(att_p=(16.0, 16.0, 16.0), att_i=(1.0, 1.0, 1.0), att_d=(10.0, 10.0, 10.0))


@dataclass(frozen=True)
class ControllerConfig:
    flight: GainSet = field(default_factory=GainSet)
    standing: GainSet = field(default_factory=lambda: GROUND_GAINS)
    rolling: GainSet = field(default_factory=lambda: GROUND_GAINS)
    phi_alpha: float = 0.2
    hysteresis: float = 0.05
    friction: float = 0.6
    margin: float = 1e-6
    rolling_margin: float = 1.0
    # after a standing -> rolling switch the outward margin grows from zero over this time
    rolling_margin_ramp: float = 0.5
    cond_max: float = 1e8
    dt: float = 0.01
    gravity_bias: bool = True
    contact_tol: float = 0.05
    qp_max_iter: int = 4000
    qp_tol: float = 1e-6
    # below this tilt the contact is taken at the rim point that is lowest in the target attitude
    flat_tilt: float = 0.05
    phi_hold_thrust: float = 0.3
    # ground attitude error is clamped to this norm so large steps are approached at bounded speed
    ground_error_limit: float = 0.25
    # subtract the along-link thrust of the previous command from the target
    tilt_feedforward: bool = True

    def __post_init__(self):
        if not self.phi_alpha > 0.0:
            raise ValueError("phi_alpha must be positive")

    def gains(self, mode: LocomotionMode) -> GainSet:
        return {
            LocomotionMode.FLIGHT: self.flight,
            LocomotionMode.STANDING: self.standing,
            LocomotionMode.ROLLING: self.rolling,
        }[mode]


class AttitudeError(NamedTuple):
    e_R: np.ndarray
    e_w: np.ndarray
    degenerate: bool


def attitude_error(R, R_des, w, w_des) -> AttitudeError:
    """``e_R = 1/2 vee(R' R_des - R_des' R)``, ``e_w = R' R_des w_des - w``.

    ``degenerate`` marks the antipodal case (relative rotation of pi), where
    ``e_R`` vanishes although the attitudes differ.
    """
    rel = R.T @ R_des
    e_R = vee(rel)  # vee takes the antisymmetric half
    e_w = rel @ np.asarray(w_des, dtype=float) - np.asarray(w, dtype=float)
    degenerate = bool(np.trace(rel) < -1.0 + 1e-9)
    return AttitudeError(e_R, e_w, degenerate)


def _pid(gains_p, gains_i, gains_d, e, integ, e_d) -> np.ndarray:
    return np.asarray(gains_p) * e + np.asarray(gains_i) * integ + np.asarray(gains_d) * e_d


def flight_torque(e_R, e_w, integ, inertia, w, gains: GainSet) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    acc = _pid(gains.att_p, gains.att_i, gains.att_d, np.asarray(e_R), np.asarray(integ), np.asarray(e_w))
    return inertia @ acc + cross3(w, inertia @ w)


def flight_force(e_r, integ, e_r_dot, gains: GainSet, R, mass: float, gravity: float = 9.81, bias: bool = True) -> np.ndarray:
    """Cog-frame force target; ``bias`` adds the hover feed-forward ``g`` on world z."""
    acc = _pid(gains.pos_p, gains.pos_i, gains.pos_d, np.asarray(e_r), np.asarray(integ), np.asarray(e_r_dot))
    if bias:
        acc = acc + np.array([0.0, 0.0, gravity])
    return mass * (np.asarray(R).T @ acc)


def gravity_moment(p_cp_cog, mass: float, gravity_up) -> np.ndarray:
    """Torque the thrust must supply about the contact point to hold the body against gravity."""
    return cross3(p_cp_cog, mass * np.asarray(gravity_up, dtype=float))


def ground_torque(e_R, e_w, integ, inertia_cp, w, p_cp_cog, mass: float, gravity_up, gains: GainSet) -> np.ndarray:
    """Contact-point torque target.

    ``gravity_up`` is the gravity magnitude along world +z expressed in cog axes.
    """
    return flight_torque(e_R, e_w, integ, inertia_cp, w, gains) + gravity_moment(p_cp_cog, mass, gravity_up)


def _force_rows(allocation: AllocationMatrix, R) -> np.ndarray:
    return np.asarray(R) @ allocation.trans


def build_standing_qp(
    tau_des_cp,
    allocation: AllocationMatrix,
    R,
    mass: float,
    gravity: float,
    friction: float,
    margin: float = 1e-6,
) -> QpProblem:
    """Minimum-thrust QP with box friction and no-lift constraints.

    The force rows use world-level axes (z up), so the friction box and the
    weight bound refer to the ground.
    """
    if allocation.frame_tag != "cp":
        raise ModeError("ground QP needs the contact-point allocation")
    f = _force_rows(allocation, R)
    fx, fy, fz = f
    mg = mass * gravity
    A_in = np.array(
        [
            fz,
            fx + friction * fz,
            -fx + friction * fz,
            fy + friction * fz,
            -fy + friction * fz,
        ]
    )
    # strict bounds via the margin; without friction the strict box would be empty,
    # so the lateral force is only held within the margin
    lateral = friction * mg - margin if friction > 0.0 else margin
    upper = np.array([mg - margin, lateral, lateral, lateral, lateral])
    return QpProblem(
        P=2.0 * np.eye(6),
        q=np.zeros(6),
        A_eq=allocation.rot,
        b_eq=np.asarray(tau_des_cp, dtype=float),
        A_in=A_in,
        lower=np.full(5, -np.inf),
        upper=upper,
    )


def build_rolling_qp(
    tau_des_cp,
    allocation: AllocationMatrix,
    R,
    mass: float,
    gravity: float,
    friction: float,
    margin: float = 1e-6,
    lateral_margin: float | None = None,
) -> QpProblem:
    """Standing QP plus ``lambda_y,i <= -margin`` (every rotor turned outward)."""
    base = build_standing_qp(tau_des_cp, allocation, R, mass, gravity, friction, margin)
    lateral_margin = margin if lateral_margin is None else lateral_margin
    rows = np.zeros((3, 6))
    for i in range(3):
        rows[i, 2 * i] = 1.0
    return replace(
        base,
        A_in=np.vstack([base.A_in, rows]),
        lower=np.concatenate([base.lower, np.full(3, -np.inf)]),
        upper=np.concatenate([base.upper, np.full(3, -lateral_margin)]),
    )


def update_mode(mode: LocomotionMode, tilt: float, phi_alpha: float, hysteresis: float = 0.05) -> LocomotionMode:
    """Standing <-> rolling switch on the distance of ``tilt`` from upright.

    Flight is left alone; the scenario commands take-off and landing.
    """
    off = abs(tilt - math.pi / 2.0)
    if mode is LocomotionMode.STANDING and off < phi_alpha:
        return LocomotionMode.ROLLING
    if mode is LocomotionMode.ROLLING and off > phi_alpha + hysteresis:
        return LocomotionMode.STANDING
    return mode


@dataclass
class Measurement:
    r: np.ndarray
    v: np.ndarray
    R: np.ndarray
    w: np.ndarray
    q: np.ndarray


@dataclass
class Targets:
    """Flight uses ``position``/``yaw``; ground modes use the ZXZ attitude."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    tilt: float = math.pi / 2.0
    rolling: float = 0.0
    rolling_rate: float = 0.0

    def attitude(self, mode: LocomotionMode) -> np.ndarray:
        if mode is LocomotionMode.FLIGHT:
            return zxz_from_angles(self.yaw, 0.0, 0.0)
        return zxz_from_angles(self.yaw, self.tilt, self.rolling)

    def angular_velocity(self, mode: LocomotionMode) -> np.ndarray:
        if mode is LocomotionMode.FLIGHT:
            return np.zeros(3)
        return np.array([0.0, 0.0, self.rolling_rate])


@dataclass
class ControllerState:
    mode: LocomotionMode = LocomotionMode.FLIGHT
    att_integ: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pos_integ: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_lam: np.ndarray | None = None
    last_phi: np.ndarray | None = None
    last_command: ActuatorCommand | None = None
    qp_warm: QpSolution | None = None
    mode_time: float = math.inf


@dataclass
class StepReport:
    command: ActuatorCommand
    mode: LocomotionMode
    wrench: np.ndarray
    lam: np.ndarray
    e_R: np.ndarray
    e_r: np.ndarray
    qp_status: str
    qp_iterations: int
    degraded: bool
    rate_limited: bool


class Controller:
    """Integrated controller; :meth:`control_step` is the only mutator."""

    def __init__(self, model: RobotModel, config: ControllerConfig | None = None, mode: LocomotionMode = LocomotionMode.FLIGHT):
        self.model = model
        self.config = config or ControllerConfig()
        self.state = ControllerState(mode=mode)
        self.qp = QpSolver(QpSettings(max_iter=self.config.qp_max_iter, tol_p=self.config.qp_tol, tol_d=self.config.qp_tol))

    @property
    def mode(self) -> LocomotionMode:
        return self.state.mode

    def set_mode(self, mode: LocomotionMode) -> None:
        if mode is self.state.mode:
            return
        if {mode, self.state.mode} == {LocomotionMode.FLIGHT, LocomotionMode.ROLLING}:
            raise ModeError("flight and rolling are only connected through standing")
        self._switch(mode)

    def _switch(self, mode: LocomotionMode) -> None:
        # gains change with the mode, integrators restart from zero
        self.state.mode = mode
        self.state.att_integ = np.zeros(3)
        self.state.pos_integ = np.zeros(3)
        self.state.qp_warm = None
        self.state.mode_time = 0.0

    def _along_link(self, frames, tag) -> np.ndarray:
        last = self.state.last_command
        if not self.config.tilt_feedforward or last is None:
            return np.zeros(6)
        return along_link_wrench(frames, self.model, last.thrust, tag)

    def control_step(self, meas: Measurement, targets: Targets) -> StepReport:
        cfg, model, st = self.config, self.model, self.state
        if not all(np.all(np.isfinite(a)) for a in (meas.r, meas.v, meas.R, meas.w, meas.q)):
            raise ValueError("non-finite measurement")

        if st.mode is not LocomotionMode.FLIGHT:
            _, tilt, _ = zxz_angles(meas.R)
            new_mode = update_mode(st.mode, tilt, cfg.phi_alpha, cfg.hysteresis)
            if new_mode is not st.mode:
                self._switch(new_mode)
        gains = cfg.gains(st.mode)
        R_des = targets.attitude(st.mode)
        err = attitude_error(meas.R, R_des, meas.w, targets.angular_velocity(st.mode))

        qp_status, qp_iters, degraded = "none", 0, False
        e_r = np.asarray(targets.position) - meas.r
        frames = forward_kinematics(model, meas.q, cog_pose=(meas.R, meas.r))
        mass, g = model.total_mass, model.gravity
        if st.mode is LocomotionMode.FLIGHT:
            inertia = inertia_at_cog(model, meas.q)
            tau = flight_torque(err.e_R, err.e_w, st.att_integ, inertia, meas.w, gains)
            e_r_dot = np.asarray(targets.velocity) - meas.v
            force = flight_force(e_r, st.pos_integ, e_r_dot, gains, meas.R, mass, g, cfg.gravity_bias)
            wrench = np.concatenate([force, tau])
            target = wrench - self._along_link(frames, "cog")
            try:
                lam = distribute_flight(target, build_allocation(frames, model, "cog"), cfg.cond_max)
            except AllocationError:
                lam, degraded = None, True
        else:
            hint = meas.R @ (R_des.T @ np.array([0.0, 0.0, -1.0]))
            frames = contact_point(model, frames, cfg.contact_tol, hint, math.sin(cfg.flat_tilt))
            inertia_cp = shift_inertia(inertia_at_cog(model, meas.q), mass, frames.p_cp_cog)
            g_up = meas.R.T @ np.array([0.0, 0.0, g])
            e_R = err.e_R
            norm = float(np.linalg.norm(e_R))
            if norm > cfg.ground_error_limit:
                e_R = e_R * (cfg.ground_error_limit / norm)
            tau = ground_torque(e_R, err.e_w, st.att_integ, inertia_cp, meas.w, frames.p_cp_cog, mass, g_up, gains)
            wrench = np.concatenate([np.zeros(3), tau])
            alloc = build_allocation(frames, model, "cp")
            tau_q = tau - self._along_link(frames, "cp")[3:]
            if st.mode is LocomotionMode.ROLLING:
                ramp = 1.0 if cfg.rolling_margin_ramp <= 0.0 else min(1.0, st.mode_time / cfg.rolling_margin_ramp)
                lateral = max(cfg.margin, cfg.rolling_margin * ramp)
                problem = build_rolling_qp(tau_q, alloc, meas.R, mass, g, cfg.friction, cfg.margin, lateral)
            else:
                problem = build_standing_qp(tau_q, alloc, meas.R, mass, g, cfg.friction, cfg.margin)
            sol = self.qp.solve(problem, warm_start=st.qp_warm)
            qp_status, qp_iters = sol.status, sol.iterations
            if sol.solved:
                lam = sol.x
                st.qp_warm = sol
            else:
                lam, degraded = None, True
                st.qp_warm = None

        if lam is None:
            lam = st.last_lam if st.last_lam is not None else np.zeros(6)
        command = components_to_command(lam, model.tilt, model.thrust_max)

        # vectoring servos cannot exceed their speed limit
        phi = command.phi
        thrust = np.asarray(command.thrust)
        rate_limited = False
        if st.last_phi is not None:
            # the angle of a nearly idle rotor is arbitrary; keep it where it is
            phi = np.where(thrust < cfg.phi_hold_thrust, st.last_phi, phi)
            step = model.vectoring_speed_max * cfg.dt
            delta = wrap_angle(phi - st.last_phi)
            clipped = np.clip(delta, -step, step)
            rate_limited = bool(np.any(np.abs(clipped - delta) > 1e-12))
            phi = wrap_angle(st.last_phi + clipped)
            # best thrust along the direction the rotor can actually reach
            comp = np.asarray(lam, dtype=float).reshape(-1, 2) * command.scale
            along = -comp[:, 0] * np.sin(phi) + comp[:, 1] * np.cos(phi)
            thrust = np.maximum(along, 0.0) / np.abs(np.cos(np.asarray(model.tilt)))
        command = ActuatorCommand(thrust, np.atleast_1d(phi), command.saturated, command.scale)

        # integrate errors; skipped while saturated (anti-windup)
        if not command.saturated:
            st.att_integ = np.clip(st.att_integ + err.e_R * cfg.dt, -gains.att_int_limit, gains.att_int_limit)
            if st.mode is LocomotionMode.FLIGHT:
                st.pos_integ = np.clip(st.pos_integ + e_r * cfg.dt, -gains.pos_int_limit, gains.pos_int_limit)
        if not degraded:
            st.last_lam = np.asarray(lam, dtype=float)
        st.last_phi = np.asarray(command.phi, dtype=float)
        st.last_command = command
        st.mode_time += cfg.dt
        return StepReport(
            command=command,
            mode=st.mode,
            wrench=wrench,
            lam=np.asarray(lam, dtype=float),
            e_R=err.e_R,
            e_r=e_r,
            qp_status=qp_status,
            qp_iterations=qp_iters,
            degraded=degraded,
            rate_limited=rate_limited,
        )
