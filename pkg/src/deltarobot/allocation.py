"""Thrust-component allocation.

The control vector ``lam`` stacks, per rotor, the lateral and normal thrust
components ``(lambda_y, lambda_z)`` in the rotor's link frame. The component
along the link (``lambda * sin(theta)``) is left out of the linear map; the
simulator adds it back when applying forces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .geometry import cross3, skew
from .robot_model import FrameSet, ModeError, RobotModel

FrameTag = Literal["cog", "cp"]

_SELECT_YZ = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class AllocationError(RuntimeError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


def rotor_force_components(thrust: float, phi: float, tilt: float) -> np.ndarray:
    """Force of one rotor in its link frame."""
    if thrust < 0.0:
        raise ValueError(f"rotor thrust must be non-negative, got {thrust}")
    ct = np.cos(tilt)
    return thrust * np.array([np.sin(tilt), -ct * np.sin(phi), ct * np.cos(phi)])


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    matrix: np.ndarray  # (6, 6): rows force then torque
    frame_tag: FrameTag

    @property
    def trans(self) -> np.ndarray:
        return self.matrix[:3]

    @property
    def rot(self) -> np.ndarray:
        return self.matrix[3:]

    def wrench(self, lam) -> np.ndarray:
        return self.matrix @ np.asarray(lam, dtype=float)


def moment_arms(frames: FrameSet, frame_tag: FrameTag) -> np.ndarray:
    """Rotor positions relative to the wrench reference point, cog axes."""
    if frame_tag == "cog":
        return frames.p
    if frame_tag == "cp":
        if frames.p_cp_cog is None:
            raise ModeError("contact-point allocation requested without a ground contact")
        return frames.p + frames.p_cp_cog
    raise ValueError(f"unknown frame tag {frame_tag!r}")


def build_allocation(frames: FrameSet, model: RobotModel, frame_tag: FrameTag = "cog") -> AllocationMatrix:
    arms = moment_arms(frames, frame_tag)
    q = np.zeros((6, 6))
    for i, link in enumerate(model.links):
        cols = frames.R_cog_L[i] @ _SELECT_YZ
        q[:3, 2 * i : 2 * i + 2] = cols
        q[3:, 2 * i : 2 * i + 2] = (skew(arms[i]) + link.drag_ratio * np.eye(3)) @ cols
    return AllocationMatrix(q, frame_tag)


def rotor_wrenches(frames: FrameSet, model: RobotModel, forces_link: np.ndarray, frame_tag: FrameTag = "cog"):
    """Per-rotor (force, torque) in cog axes for link-frame rotor forces."""
    arms = moment_arms(frames, frame_tag)
    out = []
    for i, link in enumerate(model.links):
        f = frames.R_cog_L[i] @ forces_link[i]
        out.append((f, cross3(arms[i], f) + link.drag_ratio * f))
    return out


def along_link_wrench(frames: FrameSet, model: RobotModel, thrust, frame_tag: FrameTag = "cog") -> np.ndarray:
    """Wrench of the ``thrust * sin(tilt)`` components that ``lam`` does not cover."""
    t = np.asarray(thrust, dtype=float)
    forces = np.zeros((len(t), 3))
    forces[:, 0] = t * np.sin(np.asarray(model.tilt, dtype=float))
    parts = rotor_wrenches(frames, model, forces, frame_tag)
    return np.concatenate([sum(f for f, _ in parts), sum(tau for _, tau in parts)])


def distribute_flight(target, allocation: AllocationMatrix, cond_max: float = 1e8) -> np.ndarray:
    """Solve ``Q' lam = [f; tau]`` for a cog-frame wrench target."""
    cond = np.linalg.cond(allocation.matrix)
    if not np.isfinite(cond) or cond > cond_max:
        raise AllocationError("allocation matrix is singular or ill-conditioned", float(cond))
    return np.linalg.solve(allocation.matrix, np.asarray(target, dtype=float))


@dataclass(frozen=True, eq=False)
class ActuatorCommand:
    thrust: np.ndarray  # lambda_i [N]
    phi: np.ndarray  # vectoring angles in (-pi, pi]
    saturated: bool = False
    scale: float = 1.0


def components_to_command(lam, tilt, thrust_max: float | None = None) -> ActuatorCommand:
    """Per-rotor thrust magnitude and vectoring angle from ``lam``.

    When a thrust exceeds ``thrust_max`` every rotor is scaled by the same
    factor, which keeps the wrench direction, and ``saturated`` is set.
    """
    lam = np.asarray(lam, dtype=float).reshape(3, 2)
    cos_t = np.abs(np.cos(np.asarray(tilt, dtype=float)))
    if np.any(cos_t <= 1e-6):
        raise ValueError("tilt angle too close to pi/2")
    ly, lz = lam[:, 0], lam[:, 1]
    thrust = np.hypot(ly, lz) / cos_t
    phi = np.arctan2(-ly, lz)
    phi = np.where(phi == -np.pi, np.pi, phi)
    scale = 1.0
    if thrust_max is not None and np.max(thrust) > thrust_max:
        scale = thrust_max / float(np.max(thrust))
        thrust = thrust * scale
    return ActuatorCommand(thrust=thrust, phi=phi, saturated=scale < 1.0, scale=scale)


def command_to_components(command: ActuatorCommand, tilt) -> np.ndarray:
    """Inverse of :func:`components_to_command` (unsaturated part)."""
    forces = [rotor_force_components(t, p, th) for t, p, th in zip(command.thrust, command.phi, tilt)]
    return np.array([[f[1], f[2]] for f in forces]).reshape(-1)


def actual_rotor_forces(thrust, phi, tilt) -> np.ndarray:
    """(3, 3) link-frame rotor forces including the along-link component."""
    t = np.maximum(np.asarray(thrust, dtype=float), 0.0)
    phi = np.asarray(phi, dtype=float)
    tilt = np.asarray(tilt, dtype=float)
    ct = t * np.cos(tilt)
    return np.stack([t * np.sin(tilt), -ct * np.sin(phi), ct * np.cos(phi)], axis=1)


def wrench_shift(wrench, offset) -> np.ndarray:
    """Move a wrench to a new reference point located at ``-offset`` from the old one.

    ``offset`` is the old reference point relative to the new one.
    """
    f, tau = np.asarray(wrench[:3]), np.asarray(wrench[3:])
    return np.concatenate([f, tau + cross3(offset, f)])
