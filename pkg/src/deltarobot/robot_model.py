"""Kinematic and inertial model of the three-link vectoring multirotor.

Frames
------
The cog frame shares its orientation with link 2 (the base link) and has its
origin at the centre of gravity. Each link frame has its origin at one end of
the link with ``x`` along the link, in the loop direction 1 -> 2 -> 3, so that
at ``q = (2pi/3, 2pi/3)`` the three links close into an equilateral triangle
in the base ``xy`` plane. Joints rotate about the base ``z`` axis.

Joint motion is treated as quasi-static: nothing in here looks at joint
velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import is_rotation, rot_z

ROLLING_ANGLE = 2.0 * math.pi / 3.0

# Prototype figures and the reference tilt angles.
PROTOTYPE_MASS = 4.1
PROTOTYPE_LINK_LENGTH = 0.55
PROTOTYPE_FRAME_RADIUS = 0.4
PROTOTYPE_THRUST_MAX = 26.5
PROTOTYPE_VECTORING_SPEED = 3.2
PROTOTYPE_JOINT_TORQUE = 6.8
REFERENCE_TILT = (-0.0728, 0.179, -0.0802)


class ModelError(ValueError):
    """Invalid model parameters."""


class JointLimitError(ValueError):
    def __init__(self, joint: int, angle: float, limits: tuple[float, float]):
        self.joint = joint
        self.angle = angle
        self.limits = limits
        super().__init__(
            f"joint {joint + 1} angle {angle:.6f} rad outside limits "
            f"[{limits[0]:.6f}, {limits[1]:.6f}]"
        )


class ModeError(RuntimeError):
    """Operation requested in the wrong locomotion configuration."""


def _vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ModelError(f"{name} must be a 3-vector")
    return a


@dataclass(frozen=True, eq=False)
class LinkSpec:
    length: float
    mass: float
    com_offset: np.ndarray
    inertia_link: np.ndarray
    rotor_offset: np.ndarray
    rotor_tilt: float = 0.0
    rotor_spin_dir: int = 1
    drag_ratio: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "com_offset", _vec3(self.com_offset, "com_offset"))
        object.__setattr__(self, "rotor_offset", _vec3(self.rotor_offset, "rotor_offset"))
        inertia = np.asarray(self.inertia_link, dtype=float)
        if inertia.shape != (3, 3):
            raise ModelError("inertia_link must be 3x3")
        object.__setattr__(self, "inertia_link", inertia)
        if not self.length > 0.0:
            raise ModelError("link length must be positive")
        # zero-mass links are tolerated so degenerate test models can be built
        if self.mass < 0.0:
            raise ModelError("link mass must be non-negative")
        if np.max(np.abs(inertia - inertia.T)) > 1e-12:
            raise ModelError("inertia_link must be symmetric")
        if self.mass > 0.0 and np.min(np.linalg.eigvalsh(inertia)) <= 0.0:
            raise ModelError("inertia_link must be positive definite")
        if not abs(self.rotor_tilt) < math.pi / 2.0:
            raise ModelError("|rotor_tilt| must be below pi/2")
        if self.rotor_spin_dir not in (1, -1):
            raise ModelError("rotor_spin_dir must be +1 or -1")


@dataclass(frozen=True, eq=False)
class RobotModel:
    links: tuple[LinkSpec, LinkSpec, LinkSpec]
    joint_limits: np.ndarray = field(
        default_factory=lambda: np.array([[-3 * math.pi / 4, 3 * math.pi / 4]] * 2)
    )
    frame_radius: float = PROTOTYPE_FRAME_RADIUS
    gravity: float = 9.81
    thrust_max: float = PROTOTYPE_THRUST_MAX
    vectoring_speed_max: float = PROTOTYPE_VECTORING_SPEED
    joint_torque_max: float = PROTOTYPE_JOINT_TORQUE

    def __post_init__(self):
        links = tuple(self.links)
        if len(links) != 3:
            raise ModelError("the robot has exactly three links")
        object.__setattr__(self, "links", links)
        lim = np.asarray(self.joint_limits, dtype=float).reshape(2, 2)
        if np.any(lim[:, 0] >= lim[:, 1]):
            raise ModelError("joint limits must satisfy lower < upper")
        object.__setattr__(self, "joint_limits", lim)
        if self.total_mass <= 0.0:
            raise ModelError("total mass must be positive")
        if not (self.thrust_max > 0.0 and self.vectoring_speed_max > 0.0):
            raise ModelError("thrust_max and vectoring_speed_max must be positive")
        if not self.frame_radius > 0.0:
            raise ModelError("frame_radius must be positive")

    @property
    def total_mass(self) -> float:
        return float(sum(link.mass for link in self.links))

    @property
    def tilt(self) -> np.ndarray:
        return np.array([link.rotor_tilt for link in self.links])

    @property
    def drag_ratios(self) -> np.ndarray:
        return np.array([link.drag_ratio for link in self.links])

    def with_tilt(self, tilt: Sequence[float]) -> "RobotModel":
        links = tuple(replace(link, rotor_tilt=float(t)) for link, t in zip(self.links, tilt))
        return replace(self, links=links)


def check_joints(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (2,):
        raise ModelError("joint state has two angles")
    for j in range(2):
        lo, hi = model.joint_limits[j]
        if not lo <= q[j] <= hi:
            raise JointLimitError(j, float(q[j]), (float(lo), float(hi)))
    return q


@dataclass(frozen=True, eq=False)
class FrameSet:
    """Frames for one joint configuration and body pose.

    Vectors suffixed ``_cog`` are expressed in the cog frame with the origin
    at the CoG. ``p_cp_cog`` is the CoG position relative to the ground contact
    point, in contact-point axes (which coincide with cog axes).
    """

    q: np.ndarray
    R_W_cog: np.ndarray
    r: np.ndarray
    R_cog_L: tuple[np.ndarray, np.ndarray, np.ndarray]
    link_origin_cog: np.ndarray  # (3, 3) rows per link
    link_com_cog: np.ndarray
    p: np.ndarray  # rotor origins, (3, 3)
    base_origin_cog: np.ndarray  # link-2 frame origin
    p_cp_cog: np.ndarray | None = None
    cp_world: np.ndarray | None = None

    @property
    def R_W_L(self) -> tuple[np.ndarray, ...]:
        return tuple(self.R_W_cog @ r for r in self.R_cog_L)

    def to_world(self, v_cog) -> np.ndarray:
        return self.r + self.R_W_cog @ np.asarray(v_cog)


def _chain(model: RobotModel, q: np.ndarray):
    """Link orientations and origins expressed in the link-2 (base) frame."""
    l1, l2, _ = (link.length for link in model.links)
    r1 = rot_z(-q[0])
    r3 = rot_z(q[1])
    rots = (r1, np.eye(3), r3)
    origins = np.array([-r1 @ np.array([l1, 0.0, 0.0]), np.zeros(3), np.array([l2, 0.0, 0.0])])
    return rots, origins


def _base_quantities(model: RobotModel, q: np.ndarray):
    rots, origins = _chain(model, q)
    coms = np.array([o + r @ link.com_offset for r, o, link in zip(rots, origins, model.links)])
    masses = np.array([link.mass for link in model.links])
    cog = masses @ coms / masses.sum()
    rotors = np.array([o + r @ link.rotor_offset for r, o, link in zip(rots, origins, model.links)])
    return rots, origins, coms, cog, rotors


def forward_kinematics(
    model: RobotModel,
    q,
    base_pose: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    cog_pose: tuple[np.ndarray, np.ndarray] | None = None,
) -> FrameSet:
    """Frames for joint angles ``q``.

    Either ``base_pose`` (rotation, position of the link-2 frame in world) or
    ``cog_pose`` (rotation, CoG position in world) may be given; the default
    is an identity base pose.
    """
    q = check_joints(model, q)
    rots, origins, coms, cog, rotors = _base_quantities(model, q)
    if cog_pose is not None:
        R, r = np.asarray(cog_pose[0], dtype=float), np.asarray(cog_pose[1], dtype=float)
    else:
        if base_pose is None:
            base_pose = (np.eye(3), np.zeros(3))
        R = np.asarray(base_pose[0], dtype=float)
        r = np.asarray(base_pose[1], dtype=float) + R @ cog
    return FrameSet(
        q=q,
        R_W_cog=R,
        r=r,
        R_cog_L=rots,
        link_origin_cog=origins - cog,
        link_com_cog=coms - cog,
        p=rotors - cog,
        base_origin_cog=-cog,
    )


def cog_in_base(model: RobotModel, q) -> np.ndarray:
    """CoG position in the link-2 frame."""
    return _base_quantities(model, check_joints(model, q))[3]


def inertia_at_cog(model: RobotModel, q) -> np.ndarray:
    q = check_joints(model, q)
    rots, _, coms, cog, _ = _base_quantities(model, q)
    inertia = np.zeros((3, 3))
    for r, c, link in zip(rots, coms, model.links):
        d = c - cog
        inertia += r @ link.inertia_link @ r.T
        inertia += link.mass * (d @ d * np.eye(3) - np.outer(d, d))
    return 0.5 * (inertia + inertia.T)


def shift_inertia(inertia_cog: np.ndarray, mass: float, offset) -> np.ndarray:
    """Parallel-axis shift of a CoG inertia to a point at ``-offset`` from the CoG."""
    p = np.asarray(offset, dtype=float)
    return inertia_cog + mass * (p @ p * np.eye(3) - np.outer(p, p))


def inertia_at_contact_point(model: RobotModel, q, p_cp_cog) -> np.ndarray:
    return shift_inertia(inertia_at_cog(model, q), model.total_mass, p_cp_cog)


def in_rolling_configuration(q, tol: float = 0.05) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(np.abs(q - ROLLING_ANGLE) <= tol))


def frame_center_cog(frames: FrameSet) -> np.ndarray:
    """Centre of the outer-frame circle (triangle centroid), cog frame."""
    return frames.link_origin_cog.mean(axis=0)


def lowest_rim_direction(R: np.ndarray, hint=None, flat_tol: float = 1e-9) -> np.ndarray:
    """World unit vector from the disc centre to its lowest rim point.

    The disc lies in the body ``xy`` plane. When the disc is flat the lowest
    point is not unique and ``hint`` (a world direction, default body ``-y``)
    is projected into the disc plane instead. ``flat_tol`` is the sine of the
    tilt below which the disc counts as flat.
    """
    n = R[:, 2]
    down = np.array([0.0, 0.0, -1.0])
    u = down - (down @ n) * n
    norm = np.linalg.norm(u)
    if norm > flat_tol:
        return u / norm
    h = -R[:, 1] if hint is None else np.asarray(hint, dtype=float)
    h = h - (h @ n) * n
    return h / np.linalg.norm(h)


def contact_point(
    model: RobotModel, frames: FrameSet, tol: float = 0.05, hint=None, flat_tol: float = 1e-9
) -> FrameSet:
    """Attach the ground contact point of the circular outer frame to ``frames``."""
    if not in_rolling_configuration(frames.q, tol):
        raise ModeError(
            f"joint angles {frames.q} are not in the rolling configuration "
            f"(2pi/3 +/- {tol} rad)"
        )
    R = frames.R_W_cog
    d = lowest_rim_direction(R, hint, flat_tol)
    cp_cog = frame_center_cog(frames) + model.frame_radius * (R.T @ d)
    return replace(frames, p_cp_cog=-cp_cog, cp_world=frames.to_world(cp_cog))


def rod_inertia(mass: float, length: float, radius: float = 0.0) -> np.ndarray:
    """Solid rod along x about its centre."""
    axial = 0.5 * mass * radius**2
    transverse = mass * (3.0 * radius**2 + length**2) / 12.0
    return np.diag([axial, transverse, transverse])


def composite_link(parts: Sequence[tuple[float, np.ndarray, np.ndarray]]):
    """Combine (mass, position, inertia about own centre) parts of one link.

    Returns total mass, centre of mass and inertia about that centre, all in
    the link frame.
    """
    mass = sum(m for m, _, _ in parts)
    com = sum(m * np.asarray(c, dtype=float) for m, c, _ in parts) / mass
    inertia = np.zeros((3, 3))
    for m, c, i in parts:
        d = np.asarray(c, dtype=float) - com
        inertia += i + m * (d @ d * np.eye(3) - np.outer(d, d))
    return mass, com, inertia


def default_model(
    *,
    tilt: Sequence[float] = REFERENCE_TILT,
    total_mass: float = PROTOTYPE_MASS,
    link_length: float = PROTOTYPE_LINK_LENGTH,
    frame_radius: float = PROTOTYPE_FRAME_RADIUS,
    rotor_position: float = 0.75,
    rotor_mass: float = 0.45,
    frame_mass: float = 0.2,
    rod_radius: float = 0.012,
    drag_ratio: float = 0.02,
    spin: Sequence[int] = (1, -1, 1),
) -> RobotModel:
    """Prototype-sized model with an equal mass split between the links.

    Each link is a carbon rod plus a lumped rotor/gimbal mass at the rotor
    and a lumped outer-frame mass on the outside of the link, at the frame
    radius when the links form the rolling triangle.
    """
    per_link = total_mass / 3.0
    rod_mass = per_link - rotor_mass - frame_mass
    if rod_mass <= 0.0:
        raise ModelError("rotor and frame masses exceed the per-link mass")
    inradius = link_length / (2.0 * math.sqrt(3.0))
    rotor_at = np.array([rotor_position * link_length, 0.0, 0.0])
    frame_at = np.array([0.5 * link_length, -(frame_radius - inradius), 0.0])
    mass, com, inertia = composite_link(
        [
            (rod_mass, np.array([0.5 * link_length, 0.0, 0.0]), rod_inertia(rod_mass, link_length, rod_radius)),
            (rotor_mass, rotor_at, np.zeros((3, 3))),
            (frame_mass, frame_at, np.zeros((3, 3))),
        ]
    )
    links = tuple(
        LinkSpec(
            length=link_length,
            mass=mass,
            com_offset=com,
            inertia_link=inertia,
            rotor_offset=rotor_at,
            rotor_tilt=float(t),
            rotor_spin_dir=int(s),
            drag_ratio=drag_ratio * int(s),
        )
        for t, s in zip(tilt, spin)
    )
    return RobotModel(links=links, frame_radius=frame_radius)


def model_to_dict(model: RobotModel) -> dict:
    return {
        "gravity": model.gravity,
        "frame_radius": model.frame_radius,
        "thrust_max": model.thrust_max,
        "vectoring_speed_max": model.vectoring_speed_max,
        "joint_torque_max": model.joint_torque_max,
        "joint_limits": model.joint_limits.tolist(),
        "links": [
            {
                "length": link.length,
                "mass": link.mass,
                "com_offset": link.com_offset.tolist(),
                "inertia": link.inertia_link.tolist(),
                "rotor_offset": link.rotor_offset.tolist(),
                "rotor_tilt": link.rotor_tilt,
                "rotor_spin_dir": link.rotor_spin_dir,
                "drag_ratio": link.drag_ratio,
            }
            for link in model.links
        ],
    }


def model_from_dict(data: dict) -> RobotModel:
    base = default_model()
    links_data = data.get("links")
    if links_data is None:
        links = base.links
    else:
        if len(links_data) != 3:
            raise ModelError("config must list exactly three links")
        links = tuple(
            LinkSpec(
                length=float(d["length"]),
                mass=float(d["mass"]),
                com_offset=d["com_offset"],
                inertia_link=d["inertia"],
                rotor_offset=d["rotor_offset"],
                rotor_tilt=float(d.get("rotor_tilt", 0.0)),
                rotor_spin_dir=int(d.get("rotor_spin_dir", 1)),
                drag_ratio=float(d.get("drag_ratio", 0.02)),
            )
            for d in links_data
        )
    return RobotModel(
        links=links,
        joint_limits=data.get("joint_limits", base.joint_limits),
        frame_radius=float(data.get("frame_radius", base.frame_radius)),
        gravity=float(data.get("gravity", base.gravity)),
        thrust_max=float(data.get("thrust_max", base.thrust_max)),
        vectoring_speed_max=float(data.get("vectoring_speed_max", base.vectoring_speed_max)),
        joint_torque_max=float(data.get("joint_torque_max", base.joint_torque_max)),
    )


def check_frames(frames: FrameSet, tol: float = 1e-9) -> bool:
    return is_rotation(frames.R_W_cog, tol) and all(is_rotation(r, tol) for r in frames.R_cog_L)
