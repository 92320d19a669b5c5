"""Rigid-body simulation of the robot with a rolling ground contact.

The body is integrated at its CoG with RK4 (quaternion attitude). Rotor
forces come from the actual actuator state and include the along-link thrust
component that the allocation leaves out. Joints are kinematic.

Contact modes
-------------
``air``    free flight.
``point``  the circular outer frame touches the ground at its lowest rim
           point; no-slip is enforced at the acceleration level and by an
           exact position/velocity projection after every step, with a
           Coulomb stick/slip switch and a spin-friction torque.
``rest``   the frame lies flat; the body is held until the thrust tips it
           over a rim point or lifts it off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rigid
from .allocation import ActuatorCommand, actual_rotor_forces
from .geometry import axis_angle, cross3
from .robot_model import (
    RobotModel,
    forward_kinematics,
    frame_center_cog,
    in_rolling_configuration,
    inertia_at_cog,
)

AIR = "air"
POINT = "point"
REST = "rest"

_Z = np.array([0.0, 0.0, 1.0])


class SimulationError(RuntimeError):
    pass


class SimulationAbort(SimulationError):
    def __init__(self, message: str, last_good: "SimState"):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.001
    motor_lag: float = 0.05
    friction: float = 0.6
    spin_friction: float = 0.01  # [m], spin torque = coefficient * normal force
    spin_speed: float = 0.05  # [rad/s] smoothing of the spin-friction sign
    stick_speed: float = 1e-3
    contact_tol: float = 0.05
    rest_tilt: float = 1e-3


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    r: np.ndarray
    v: np.ndarray
    R: np.ndarray
    w: np.ndarray  # body frame
    q: np.ndarray
    phi: np.ndarray
    thrust: np.ndarray
    contact: str = AIR
    slip: bool = False
    pivot: np.ndarray | None = None
    contact_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    slip_speed: float = 0.0
    penetration: float = 0.0

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.r, self.v, self.R, self.w, self.phi, self.thrust))


@dataclass(frozen=True, eq=False)
class _Body:
    mass: float
    inertia: np.ndarray
    inertia_inv: np.ndarray
    rotor_pos: np.ndarray
    link_rot: np.ndarray  # (n, 3, 3)
    torque_maps: np.ndarray  # (n, 3, 3), link force -> CoG torque
    center: np.ndarray | None  # frame-circle centre relative to CoG, body axes

    # flat tuples for the scalar kernels
    inertia_t: tuple = ()
    inertia_inv_t: tuple = ()
    center_t: tuple | None = None


class Simulator:
    def __init__(self, model: RobotModel, config: SimConfig | None = None):
        self.model = model
        self.config = config or SimConfig()
        self._cache: dict[tuple, _Body] = {}

    # -- body quantities -------------------------------------------------
    def body(self, q) -> _Body:
        key = tuple(float(x) for x in q)
        b = self._cache.get(key)
        if b is None:
            frames = forward_kinematics(self.model, key)
            inertia = inertia_at_cog(self.model, key)
            center = frame_center_cog(frames) if in_rolling_configuration(key, self.config.contact_tol) else None
            rot = np.array(frames.R_cog_L)
            maps = np.array(
                [
                    (_skew(frames.p[i]) + link.drag_ratio * np.eye(3)) @ rot[i]
                    for i, link in enumerate(self.model.links)
                ]
            )
            inv = np.linalg.inv(inertia)
            b = _Body(self.model.total_mass, inertia, inv, frames.p, rot, maps, center,
                      _flat(inertia), _flat(inv), None if center is None else _flat(center))
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = b
        return b

    def thrust_wrench(self, q, thrust, phi) -> tuple[np.ndarray, np.ndarray]:
        """Body-frame force and CoG torque of the actual rotor state."""
        b = self.body(q)
        forces = actual_rotor_forces(thrust, phi, self.model.tilt)
        f = np.einsum("kij,kj->i", b.link_rot, forces)
        tau = np.einsum("kij,kj->i", b.torque_maps, forces)
        return f, tau

    def joint_torques(self, q, thrust, phi) -> np.ndarray:
        """Quasi-static torques about joints 1 and 2 (body z axis).

        Each outer link carries its rotor force and its share of the body
        acceleration; link rates are neglected.
        """
        frames = forward_kinematics(self.model, q)
        forces = actual_rotor_forces(thrust, phi, self.model.tilt)
        f = [frames.R_cog_L[i] @ forces[i] for i in range(len(forces))]
        total = np.sum(f, axis=0)
        out = np.zeros(2)
        for k, (link, joint) in enumerate(((0, 1), (2, 2))):
            o = frames.link_origin_cog[joint]
            spec = self.model.links[link]
            tau = (
                cross3(frames.p[link] - o, f[link])
                + spec.drag_ratio * f[link]
                - cross3(frames.link_com_cog[link] - o, spec.mass / self.model.total_mass * total)
            )
            out[k] = tau[2]
        return out

    # -- contact geometry ------------------------------------------------
    def _rim(self, b: _Body, R: np.ndarray, w: np.ndarray, hint):
        """Contact vector from CoG (world), its time derivative and the in-plane direction."""
        h = None if hint is None else tuple(np.asarray(hint, dtype=float).tolist())
        rho, rho_dot, d = _rigid.rim(tuple(R.ravel().tolist()), tuple(np.asarray(w, dtype=float).tolist()),
                                     b.center_t, self.model.frame_radius, h)
        return np.array(rho), np.array(rho_dot), np.array(d)

    # -- dynamics --------------------------------------------------------
    def _dynamics(self, b: _Body, f_b, tau_b, ext_tau, contact, slip_dir, normal_prev, hint) -> _rigid.Dynamics:
        cfg = self.config
        return _rigid.Dynamics(
            b.mass, self.model.gravity, b.inertia_t, b.inertia_inv_t, b.center_t, self.model.frame_radius,
            tuple(f_b.tolist()), tuple((tau_b + ext_tau).tolist()), cfg.spin_friction, cfg.spin_speed,
            cfg.friction, contact == POINT, slip_dir, normal_prev,
            None if hint is None else tuple(np.asarray(hint, dtype=float).tolist()),
        )

    def step(
        self,
        state: SimState,
        command: ActuatorCommand,
        dt: float | None = None,
        ext_force=None,
        ext_torque=None,
    ) -> SimState:
        """Advance by ``dt`` holding the actuator state over the step."""
        dt = self.config.dt if dt is None else dt
        if not 0.0 < dt <= 0.01:
            raise ValueError("dt must be in (0, 0.01]")
        cfg = self.config
        b = self.body(state.q)
        ext_f = np.zeros(3) if ext_force is None else np.asarray(ext_force, dtype=float)
        ext_tau = np.zeros(3) if ext_torque is None else np.asarray(ext_torque, dtype=float)
        f_b, tau_b = self.thrust_wrench(state.q, state.thrust, state.phi)

        contact, slip, pivot = state.contact, state.slip, state.pivot
        if contact != AIR and b.center is None:
            raise SimulationError("ground contact outside the rolling configuration")
        if contact == REST:
            contact, pivot = self._rest_transition(state, b, f_b, tau_b, ext_f, ext_tau)
            if contact == REST:
                return self._advance_actuators(
                    replace(state, t=state.t + dt, v=np.zeros(3), w=np.zeros(3),
                            contact_force=np.array([0.0, 0.0, b.mass * self.model.gravity]) - state.R @ f_b),
                    command,
                    dt,
                )

        y0 = state.r.tolist() + state.v.tolist() + list(_rigid.quat(tuple(state.R.ravel().tolist()))) + state.w.tolist()
        ext_t = tuple(ext_f.tolist())
        normal_prev = float(state.contact_force[2])
        dyn = self._dynamics(b, f_b, tau_b, ext_tau, contact, None, normal_prev, pivot)
        k1 = None
        if contact == POINT:
            k1 = dyn.deriv(y0, ext_t)
            fc = k1[1]
            normal = fc[2]
            R_t = tuple(state.R.ravel().tolist())
            w_t = tuple(state.w.tolist())
            rho, _, _ = _rigid.rim(R_t, w_t, b.center_t, self.model.frame_radius, dyn.hint)
            wr = _rigid.cross(_rigid.mv(R_t, w_t), rho)
            vsx, vsy = y0[3] + wr[0], y0[4] + wr[1]
            vs = math.hypot(vsx, vsy)
            tn = math.hypot(fc[0], fc[1])
            slip_dir = None
            if normal < 0.0:
                contact, slip = AIR, False
                dyn.point = False
            elif slip and vs > cfg.stick_speed:
                slip_dir = (-vsx / vs, -vsy / vs)
            elif tn > cfg.friction * normal:
                slip = True
                slip_dir = (fc[0] / tn, fc[1] / tn)
            else:
                slip = False
            if not dyn.point or slip_dir is not None:
                dyn.slip_dir = slip_dir
                k1 = None

        try:
            y, fc1 = dyn.rk4(y0, dt, ext_t, k1)
        except ZeroDivisionError as exc:
            raise SimulationError(str(exc)) from None
        if not all(math.isfinite(v) for v in y):
            raise SimulationAbort("simulation produced a non-finite state", state)
        R_new = np.array(_rigid.rot(y[6:10])).reshape(3, 3)
        y = np.array(y)

        new = replace(state, t=state.t + dt, r=y[:3], v=y[3:6], R=R_new, w=y[10:], contact=contact,
                      slip=slip, pivot=pivot, contact_force=np.array(fc1))
        new = self._project(new, b)
        return self._advance_actuators(new, command, dt)

    # -- contact bookkeeping --------------------------------------------
    def _rest_transition(self, state, b, f_b, tau_b, ext_f, ext_tau):
        """Decide whether a flat-lying body stays put, tips or lifts off."""
        m, g = b.mass, self.model.gravity
        R = state.R
        force_w = R @ f_b + ext_f
        if force_w[2] > m * g:
            return AIR, None
        moment_c = R @ (tau_b + ext_tau) + cross3(-(R @ b.center), force_w)  # about the disc centre
        horiz = np.array([moment_c[0], moment_c[1], 0.0])
        if np.linalg.norm(horiz) < 1e-12:
            return REST, state.pivot
        k = horiz / np.linalg.norm(horiz)
        d = cross3(k, _Z)
        pivot = R @ b.center + self.model.frame_radius * d  # from CoG
        total = R @ (tau_b + ext_tau) + cross3(-pivot, force_w - np.array([0.0, 0.0, m * g]))
        if total @ k > 0.0:
            return POINT, d
        return REST, state.pivot

    def _project(self, s: SimState, b: _Body) -> SimState:
        R_t = tuple(s.R.ravel().tolist())
        hint = None if s.pivot is None else tuple(np.asarray(s.pivot, dtype=float).tolist())
        rf = self.model.frame_radius
        if s.contact == AIR:
            if b.center is not None:
                rho, _, _ = _rigid.rim(R_t, (0.0, 0.0, 0.0), b.center_t, rf, hint)
                if s.r[2] + rho[2] < 0.0:
                    # touchdown: inelastic, continue in point contact
                    s = replace(s, contact=POINT, slip=False)
                else:
                    return replace(s, slip_speed=0.0, penetration=0.0)
            else:
                if s.r[2] < 0.0:
                    raise SimulationAbort("ground impact outside the rolling configuration", s)
                return s
        if s.contact != POINT:
            return s
        rho, _, _ = _rigid.rim(R_t, (0.0, 0.0, 0.0), b.center_t, rf, hint)
        r = s.r.copy()
        r[2] = -rho[2]
        w_t = tuple(s.w.tolist())
        wr = _rigid.cross(_rigid.mv(R_t, w_t), rho)
        vp = (s.v[0] + wr[0], s.v[1] + wr[1], s.v[2] + wr[2])
        K = _rigid.contact_matrix(R_t, rho, b.inertia_inv_t, b.mass)
        if s.slip:
            imp = (0.0, 0.0, -vp[2] / K[8])
        else:
            imp = _rigid.solve3(K, (-vp[0], -vp[1], -vp[2]))
            if imp is None:
                raise SimulationError("singular contact matrix")
        v = s.v + np.array(imp) / b.mass
        dw = _rigid.mv(b.inertia_inv_t, _rigid.mtv(R_t, _rigid.cross(rho, imp)))
        w = s.w + np.array(dw)
        wr = _rigid.cross(_rigid.mv(R_t, tuple(w.tolist())), rho)
        s = replace(s, r=r, v=v, w=w, slip_speed=math.hypot(v[0] + wr[0], v[1] + wr[1]),
                    penetration=max(0.0, -(r[2] + rho[2])))
        # settle flat: disc normal vertical and tipping back
        n = (R_t[2], R_t[5], R_t[8])
        n_dot_z = _rigid.cross(_rigid.mv(R_t, tuple(w.tolist())), n)[2] * math.copysign(1.0, n[2])
        if abs(n[2]) > math.cos(self.config.rest_tilt) and n_dot_z >= 0.0:
            s = self._settle(s, b)
        return s

    def _settle(self, s: SimState, b: _Body) -> SimState:
        n = s.R[:, 2]
        axis = cross3(n, _Z * np.sign(n[2]))
        sn = np.linalg.norm(axis)
        R = s.R
        if sn > 0.0:
            R = axis_angle(axis, math.asin(min(sn, 1.0))) @ s.R
        r = s.r.copy()
        r[2] = -(R @ b.center)[2]
        return replace(s, R=R, r=r, v=np.zeros(3), w=np.zeros(3), contact=REST, slip=False,
                       slip_speed=0.0, penetration=0.0)

    def _advance_actuators(self, s: SimState, command: ActuatorCommand, dt: float) -> SimState:
        lag = self.config.motor_lag
        decay = math.exp(-dt / lag) if lag > 0.0 else 0.0
        t_max = self.model.thrust_max
        step = self.model.vectoring_speed_max * dt
        thrust, phi = [], []
        for i, (tc, pc) in enumerate(zip(np.asarray(command.thrust, dtype=float).tolist(),
                                         np.asarray(command.phi, dtype=float).tolist())):
            target = min(max(tc, 0.0), t_max)
            thrust.append(target + (float(s.thrust[i]) - target) * decay)
            p = float(s.phi[i])
            phi.append(_wrap(p + min(max(_wrap(pc - p), -step), step)))
        return replace(s, thrust=np.array(thrust), phi=np.array(phi))


def _wrap(a: float) -> float:
    out = (a + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if out == -math.pi else out


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _flat(a) -> tuple:
    return tuple(float(x) for x in np.asarray(a, dtype=float).ravel())


def rigid_wrench_state(model: RobotModel, **kw) -> SimState:
    """Convenience constructor with zero velocities."""
    q = np.asarray(kw.pop("q"), dtype=float)
    return SimState(
        t=kw.pop("t", 0.0),
        r=np.asarray(kw.pop("r", np.zeros(3)), dtype=float),
        v=np.asarray(kw.pop("v", np.zeros(3)), dtype=float),
        R=np.asarray(kw.pop("R", np.eye(3)), dtype=float),
        w=np.asarray(kw.pop("w", np.zeros(3)), dtype=float),
        q=q,
        phi=np.asarray(kw.pop("phi", np.zeros(3)), dtype=float),
        thrust=np.asarray(kw.pop("thrust", np.zeros(3)), dtype=float),
        **kw,
    )
