"""Small SO(3) helpers shared across the package."""

from __future__ import annotations

import numpy as np


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors; np.cross has a large fixed overhead at this size."""
    a0, a1, a2 = np.asarray(a, dtype=float).tolist()
    b0, b1, b2 = np.asarray(b, dtype=float).tolist()
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def skew(v) -> np.ndarray:
    """Matrix [v x] such that skew(v) @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew` (uses the antisymmetric part)."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.eye(3)
    k = skew(axis / n)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    r = np.asarray(r)
    if r.shape != (3, 3):
        return False
    return (
        np.max(np.abs(r.T @ r - np.eye(3))) < tol
        and abs(np.linalg.det(r) - 1.0) < tol
    )


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0.0:
        u[:, -1] *= -1.0
        out = u @ vt
    return out


# Body attitude on the ground is parameterised as Rz(yaw) Rx(tilt) Rz(rolling):
# "tilt" tips the disc plane away from horizontal (pi/2 = standing on the rim) and
# "rolling" is the rotation about the disc axis.


def zxz_from_angles(yaw: float, tilt: float, rolling: float) -> np.ndarray:
    return rot_z(yaw) @ rot_x(tilt) @ rot_z(rolling)


def zxz_angles(r: np.ndarray) -> tuple[float, float, float]:
    """Return (yaw, tilt, rolling) with tilt in [0, pi].

    At tilt == 0 the decomposition is degenerate; the whole in-plane angle is
    reported as ``rolling`` and yaw is 0.
    """
    tilt = float(np.arccos(np.clip(r[2, 2], -1.0, 1.0)))
    if np.hypot(r[0, 2], r[1, 2]) < 1e-12:
        return 0.0, tilt, float(np.arctan2(r[1, 0], r[0, 0]))
    yaw = float(np.arctan2(r[0, 2], -r[1, 2]))
    rolling = float(np.arctan2(r[2, 0], r[2, 1]))
    return yaw, tilt, rolling


def rpy(r: np.ndarray) -> np.ndarray:
    """Roll, pitch, yaw (ZYX convention)."""
    pitch = -np.arcsin(np.clip(r[2, 0], -1.0, 1.0))
    roll = np.arctan2(r[2, 1], r[2, 2])
    yaw = np.arctan2(r[1, 0], r[0, 0])
    return np.array([roll, pitch, yaw])


def quat_from_rot(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    tr = np.trace(r)
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    q /= np.linalg.norm(q)
    return q if q[0] >= 0.0 else -q


def rot_from_quat(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    out = np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if np.ndim(out) == 0 else out
