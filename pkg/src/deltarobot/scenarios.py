"""Scripted experiments: event timelines, the closed loop and its log."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .control import Controller, ControllerConfig, LocomotionMode, Measurement, Targets
from .geometry import axis_angle, quat_from_rot, rpy, wrap_angle, zxz_angles, zxz_from_angles
from .metrics import RunMetrics, compute_metrics
from .robot_model import ROLLING_ANGLE, RobotModel, default_model
from .sim import AIR, POINT, REST, SimConfig, SimState, SimulationAbort, Simulator
from .telemetry import TelemetryLog

EVENT_KINDS = ("joints", "target", "rolling_ramp", "mode", "disturbance")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Event:
    """One timeline entry.

    ``joints``        params ``q`` (2 angles), ``duration``
    ``target``        any of ``position``, ``yaw``, ``tilt``, ``rolling``
    ``rolling_ramp``  ``rate`` [rad/s], ``duration``, optional ``accel`` [rad/s^2]
    ``mode``          ``mode`` (flight, standing, rolling)
    ``disturbance``   ``torque`` (world frame, N m), ``duration``
    """

    time: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioError(f"unknown event kind {self.kind!r}")
        if not self.time >= 0.0:
            raise ScenarioError("event time must be non-negative")


@dataclass(frozen=True)
class InitialCondition:
    position: tuple[float, float, float] = (0.0, 0.0, 1.0)
    yaw: float = 0.0
    tilt: float = 0.0
    rolling: float = 0.0
    q: tuple[float, float] = (ROLLING_ANGLE, ROLLING_ANGLE)
    contact: str = AIR
    mode: str = "flight"


@dataclass(frozen=True)
class NoiseModel:
    position: float = 1e-3
    velocity: float = 5e-3
    attitude: float = 2e-3
    angular_velocity: float = 1e-2


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    duration: float
    initial: InitialCondition
    events: tuple[Event, ...] = ()
    window: tuple[float, float] | None = None
    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ScenarioError("events must be time-ordered")
        if not self.duration > 0.0:
            raise ScenarioError("duration must be positive")
        if self.initial.contact not in (AIR, POINT, REST):
            raise ScenarioError(f"unknown contact {self.initial.contact!r}")


def hover_transform() -> Scenario:
    # open the links in the air; q = 0 is a singular (collinear) chain
    return Scenario(
        name="hover-transform",
        duration=14.0,
        initial=InitialCondition(position=(0.0, 0.0, 1.0)),
        events=(
            Event(0.0, "target", {"position": (0.0, 0.0, 1.0), "yaw": 0.0}),
            Event(4.0, "joints", {"q": (1.75, 1.75), "duration": 5.0}),
        ),
        window=(2.0, 14.0),
    )


def standup() -> Scenario:
    return Scenario(
        name="standup",
        duration=10.0,
        initial=InitialCondition(position=(0.0, 0.0, 0.0), contact=REST, mode="standing"),
        events=(Event(0.0, "target", {"yaw": 0.0, "tilt": math.pi / 2, "rolling": 0.0}),),
        window=(6.0, 10.0),
    )


def disturbance() -> Scenario:
    return Scenario(
        name="disturbance",
        duration=12.0,
        initial=InitialCondition(position=(0.0, 0.0, 0.0), tilt=math.pi / 2, contact=POINT, mode="rolling"),
        events=(
            Event(0.0, "target", {"yaw": 0.0, "tilt": math.pi / 2, "rolling": 0.0}),
            Event(2.0, "disturbance", {"torque": (4.0, 0.0, 0.0), "duration": 0.1}),
            Event(6.0, "disturbance", {"torque": (0.0, 0.0, 2.0), "duration": 0.1}),
            Event(9.0, "disturbance", {"torque": (-4.0, 0.0, 0.0), "duration": 0.1}),
        ),
        window=(0.0, 12.0),
    )


def roll() -> Scenario:
    return Scenario(
        name="roll",
        duration=12.0,
        initial=InitialCondition(position=(0.0, 0.0, 0.0), tilt=math.pi / 2, contact=POINT, mode="rolling"),
        events=(
            Event(0.0, "target", {"yaw": 0.0, "tilt": math.pi / 2, "rolling": 0.0}),
            Event(2.0, "rolling_ramp", {"rate": 1.0, "duration": 10.0, "accel": 0.5}),
        ),
        window=(4.0, 12.0),
    )


BUILTIN = {
    "hover-transform": hover_transform,
    "standup": standup,
    "disturbance": disturbance,
    "roll": roll,
}


def builtin(name: str) -> Scenario:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN)}") from None


@dataclass(eq=False)
class RunResult:
    scenario: Scenario
    log: TelemetryLog
    metrics: RunMetrics | None
    aborted: str | None
    max_penetration: float
    max_slip_speed: float
    slip_steps: int
    degraded_steps: int
    max_joint_torque: float
    joint_torque_exceeded: bool
    wall_time: float

    def summary(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "aborted": self.aborted,
            "max_penetration": self.max_penetration,
            "max_slip_speed": self.max_slip_speed,
            "slip_steps": self.slip_steps,
            "degraded_steps": self.degraded_steps,
            "max_joint_torque": self.max_joint_torque,
            "joint_torque_exceeded": self.joint_torque_exceeded,
            "wall_time": self.wall_time,
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }


def _ramp_profile(tau: float, rate: float, accel: float) -> tuple[float, float]:
    """Angle and rate after ``tau`` seconds of a ramp that accelerates at ``accel`` up to ``rate``."""
    if not math.isfinite(accel):
        return rate * tau, rate
    sign = math.copysign(1.0, rate)
    t_acc = abs(rate) / accel
    if tau < t_acc:
        return sign * 0.5 * accel * tau * tau, sign * accel * tau
    return sign * 0.5 * accel * t_acc * t_acc + rate * (tau - t_acc), rate


class _Timeline:
    """Applies events and produces targets, joint angles and disturbances."""

    def __init__(self, scenario: Scenario, q0):
        self.events = list(scenario.events)
        self.targets = Targets(position=np.array(scenario.initial.position, dtype=float),
                               yaw=scenario.initial.yaw, tilt=scenario.initial.tilt,
                               rolling=scenario.initial.rolling)
        self.q = np.array(q0, dtype=float)
        self._joint = None  # (t0, t1, q_from, q_to)
        self._ramp = None  # (t0, t1, start, rate, accel)
        self._dist = []  # (t0, t1, torque)
        self.mode_requests: list[LocomotionMode] = []

    def advance(self, t: float) -> None:
        while self.events and self.events[0].time <= t + 1e-9:
            self._apply(self.events.pop(0), t)
        if self._joint is not None:
            t0, t1, a, b = self._joint
            s = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
            s = 0.5 - 0.5 * math.cos(math.pi * s)
            self.q = a + s * (b - a)
            if t >= t1:
                self._joint = None
        if self._ramp is not None:
            t0, t1, start, rate, accel = self._ramp
            angle, speed = _ramp_profile(min(t, t1) - t0, rate, accel)
            self.targets.rolling = start + angle
            self.targets.rolling_rate = speed if t < t1 else 0.0

    def _apply(self, ev: Event, t: float) -> None:
        p = ev.params
        if ev.kind == "target":
            if "position" in p:
                self.targets.position = np.array(p["position"], dtype=float)
            for key in ("yaw", "tilt", "rolling"):
                if key in p:
                    setattr(self.targets, key, float(p[key]))
        elif ev.kind == "joints":
            target = np.array(p["q"], dtype=float)
            duration = float(p.get("duration", 0.0))
            if duration <= 0.0:
                self.q = target
            else:
                self._joint = (ev.time, ev.time + duration, self.q.copy(), target)
        elif ev.kind == "rolling_ramp":
            self._ramp = (ev.time, ev.time + float(p["duration"]), self.targets.rolling, float(p["rate"]),
                          float(p.get("accel", math.inf)))
        elif ev.kind == "mode":
            self.mode_requests.append(LocomotionMode(p["mode"]))
        elif ev.kind == "disturbance":
            self._dist.append((ev.time, ev.time + float(p["duration"]), np.array(p["torque"], dtype=float)))

    def disturbance(self, t: float) -> np.ndarray:
        out = np.zeros(3)
        for t0, t1, tau in self._dist:
            if t0 <= t < t1:
                out = out + tau
        return out


def initial_state(sim: Simulator, ic: InitialCondition) -> SimState:
    q = np.array(ic.q, dtype=float)
    tilt = 0.0 if ic.contact == REST else ic.tilt
    R = zxz_from_angles(ic.yaw, tilt, ic.rolling)
    r = np.array(ic.position, dtype=float)
    if ic.contact != AIR:
        body = sim.body(q)
        if body.center is None:
            raise ScenarioError("ground start requires the rolling configuration")
        rho, _, _ = sim._rim(body, R, np.zeros(3), None)
        r = np.array([r[0], r[1], -rho[2]]) if ic.contact == POINT else np.array([r[0], r[1], -(R @ body.center)[2]])
    n = len(sim.model.links)
    return SimState(t=0.0, r=r, v=np.zeros(3), R=R, w=np.zeros(3), q=q, phi=np.zeros(n), thrust=np.zeros(n),
                    contact=ic.contact)


def _measure(state: SimState, rng: np.random.Generator, noise: NoiseModel) -> Measurement:
    dr = rng.normal(size=3) * noise.position
    dv = rng.normal(size=3) * noise.velocity
    da = rng.normal(size=3) * noise.attitude
    dw = rng.normal(size=3) * noise.angular_velocity
    R = state.R @ axis_angle(da, float(np.linalg.norm(da))) if np.any(da) else state.R
    return Measurement(state.r + dr, state.v + dv, R, state.w + dw, state.q.copy())


def run_scenario(
    scenario: Scenario,
    model: RobotModel | None = None,
    controller_config: ControllerConfig | None = None,
    sim_config: SimConfig | None = None,
    seed: int | None = None,
) -> RunResult:
    """Run the closed loop; the log is kept even when the run aborts."""
    if seed is not None:
        scenario = replace(scenario, seed=int(seed))
    model = model or default_model()
    ccfg = controller_config or ControllerConfig()
    sim = Simulator(model, sim_config or SimConfig())
    dt = sim.config.dt
    substeps = int(round(ccfg.dt / dt))
    if substeps < 1 or abs(substeps * dt - ccfg.dt) > 1e-12:
        raise ScenarioError("control period must be a whole multiple of the physics step")
    rng = np.random.default_rng(scenario.seed)
    ctrl = Controller(model, ccfg, LocomotionMode(scenario.initial.mode))
    timeline = _Timeline(scenario, scenario.initial.q)
    state = initial_state(sim, scenario.initial)
    log = TelemetryLog()

    n_ctrl = int(round(scenario.duration / ccfg.dt))
    max_pen = max_slip = 0.0
    slip_steps = degraded_steps = 0
    max_tj = 0.0
    aborted = None
    wall0 = time.perf_counter()
    first = True
    interval = [False, 0.0, 0.0]  # slip, penetration, slip speed over the last period
    for k in range(n_ctrl + 1):
        t = k * ccfg.dt
        timeline.advance(t)
        if not np.array_equal(timeline.q, state.q):
            if state.contact != AIR:
                aborted = "joint motion requested while on the ground"
                break
            state = replace(state, q=timeline.q.copy())
        for mode in timeline.mode_requests:
            ctrl.set_mode(mode)
        timeline.mode_requests.clear()

        try:
            report = ctrl.control_step(_measure(state, rng, scenario.noise), timeline.targets)
        except Exception as exc:  # controller failure ends the run, log is kept
            aborted = f"controller: {exc}"
            break
        if first and state.contact != REST:
            # start from the trim command instead of a thrust step
            state = replace(state, thrust=np.array(report.command.thrust), phi=np.array(report.command.phi))
        first = False
        degraded_steps += int(report.degraded)

        tj = sim.joint_torques(state.q, state.thrust, state.phi)
        max_tj = max(max_tj, float(np.max(np.abs(tj))))
        log.append(_row(t, state, report, timeline.targets, interval, tj))
        if k == n_ctrl:
            break
        interval = [False, 0.0, 0.0]
        for _ in range(substeps):
            ext = state.R.T @ timeline.disturbance(state.t)
            try:
                state = sim.step(state, report.command, dt, ext_torque=ext)
            except SimulationAbort as exc:
                aborted = f"simulation: {exc}"
                state = exc.last_good
                break
            slip_steps += int(state.slip)
            interval[0] |= state.slip
            interval[1] = max(interval[1], state.penetration)
            if state.contact == POINT:
                interval[2] = max(interval[2], state.slip_speed)
        max_pen = max(max_pen, interval[1])
        max_slip = max(max_slip, interval[2])
        if aborted:
            break

    wall = time.perf_counter() - wall0
    metrics = None
    if len(log):
        try:
            metrics = compute_metrics(log, scenario.window)
        except ValueError:
            metrics = None
    return RunResult(
        scenario=scenario,
        log=log,
        metrics=metrics,
        aborted=aborted,
        max_penetration=max_pen,
        max_slip_speed=max_slip,
        slip_steps=slip_steps,
        degraded_steps=degraded_steps,
        max_joint_torque=max_tj,
        joint_torque_exceeded=max_tj > model.joint_torque_max,
        wall_time=wall,
    )


def _row(t, s: SimState, report, targets: Targets, interval, joint_torque) -> dict:
    yaw, tilt, rolling = zxz_angles(s.R)
    mode = report.mode
    flight = mode is LocomotionMode.FLIGHT
    R_des = targets.attitude(mode)
    e_att = rpy(R_des.T @ s.R)
    e_pos = targets.position - s.r if flight else np.zeros(3)
    qt = quat_from_rot(s.R)
    lam = report.lam
    cmd = report.command
    row = {
        "t": t,
        "mode": mode.value,
        "contact": s.contact,
        "x": s.r[0], "y": s.r[1], "z": s.r[2],
        "vx": s.v[0], "vy": s.v[1], "vz": s.v[2],
        "qw": qt[0], "qx": qt[1], "qy": qt[2], "qz": qt[3],
        "wx": s.w[0], "wy": s.w[1], "wz": s.w[2],
        "q1": s.q[0], "q2": s.q[1],
        "yaw": yaw, "tilt": tilt, "rolling": rolling,
        "ex": e_pos[0], "ey": e_pos[1], "ez": e_pos[2],
        "e_roll": e_att[0], "e_pitch": e_att[1], "e_yaw": e_att[2],
        "e_tilt": 0.0 if flight else targets.tilt - tilt,
        "e_rolling": 0.0 if flight else float(wrap_angle(targets.rolling - rolling)),
        "normal_force": s.contact_force[2] if s.contact != AIR else 0.0,
        "slip": bool(interval[0]),
        "slip_speed": interval[2],
        "penetration": interval[1],
        "joint_torque1": joint_torque[0], "joint_torque2": joint_torque[1],
        "qp_status": report.qp_status,
        "qp_iter": int(report.qp_iterations),
        "degraded": bool(report.degraded),
    }
    for i in range(3):
        row[f"lam_y{i + 1}"] = lam[2 * i]
        row[f"lam_z{i + 1}"] = lam[2 * i + 1]
        row[f"thrust{i + 1}"] = cmd.thrust[i]
        row[f"phi{i + 1}"] = cmd.phi[i]
        row[f"thrust_act{i + 1}"] = s.thrust[i]
        row[f"phi_act{i + 1}"] = s.phi[i]
    return row
