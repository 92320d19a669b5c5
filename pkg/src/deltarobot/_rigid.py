"""Scalar kernels for the simulator's inner loop.

NumPy's per-call overhead dominates on 3-vectors, so the RK4 stages run on
plain floats. Matrices are row-major 9-tuples.
"""

from __future__ import annotations

import math


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def mv(M, v):
    x, y, z = v
    return (M[0] * x + M[1] * y + M[2] * z, M[3] * x + M[4] * y + M[5] * z, M[6] * x + M[7] * y + M[8] * z)


def mtv(M, v):
    x, y, z = v
    return (M[0] * x + M[3] * y + M[6] * z, M[1] * x + M[4] * y + M[7] * z, M[2] * x + M[5] * y + M[8] * z)


def mm(A, B):
    a0, a1, a2, a3, a4, a5, a6, a7, a8 = A
    b0, b1, b2, b3, b4, b5, b6, b7, b8 = B
    return (
        a0 * b0 + a1 * b3 + a2 * b6, a0 * b1 + a1 * b4 + a2 * b7, a0 * b2 + a1 * b5 + a2 * b8,
        a3 * b0 + a4 * b3 + a5 * b6, a3 * b1 + a4 * b4 + a5 * b7, a3 * b2 + a4 * b5 + a5 * b8,
        a6 * b0 + a7 * b3 + a8 * b6, a6 * b1 + a7 * b4 + a8 * b7, a6 * b2 + a7 * b5 + a8 * b8,
    )


def transpose(M):
    return (M[0], M[3], M[6], M[1], M[4], M[7], M[2], M[5], M[8])


def rot(q):
    w, x, y, z = q
    s = 1.0 / math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w * s, x * s, y * s, z * s
    return (
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    )


def quat(R):
    """Unit quaternion (w, x, y, z), w >= 0, of a rotation matrix."""
    r00, r01, r02, r10, r11, r12, r20, r21, r22 = R
    tr = r00 + r11 + r22
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = (0.25 * s, (r21 - r12) / s, (r02 - r20) / s, (r10 - r01) / s)
    elif r00 > r11 and r00 > r22:
        s = 2.0 * math.sqrt(1.0 + r00 - r11 - r22)
        q = ((r21 - r12) / s, 0.25 * s, (r01 + r10) / s, (r02 + r20) / s)
    elif r11 > r22:
        s = 2.0 * math.sqrt(1.0 + r11 - r00 - r22)
        q = ((r02 - r20) / s, (r01 + r10) / s, 0.25 * s, (r12 + r21) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + r22 - r00 - r11)
        q = ((r10 - r01) / s, (r02 + r20) / s, (r12 + r21) / s, 0.25 * s)
    n = math.sqrt(sum(v * v for v in q))
    if q[0] < 0.0:
        n = -n
    return tuple(v / n for v in q)


def solve3(K, r):
    """Cramer's rule; returns None for a singular matrix."""
    a, b, c, d, e, f, g, h, i = K
    x, y, z = r
    c0, c1, c2 = e * i - f * h, f * g - d * i, d * h - e * g
    det = a * c0 + b * c1 + c * c2
    if abs(det) < 1e-300:
        return None
    return (
        (x * c0 + b * (z * f - y * i) + c * (y * h - z * e)) / det,
        (a * (y * i - z * f) + x * c1 + c * (z * d - y * g)) / det,
        (a * (z * e - y * h) + b * (y * g - z * d) + x * c2) / det,
    )


def rim(R, w, center, radius, hint):
    """Lowest rim point relative to the CoG (world), its rate and the in-plane direction.

    ``hint`` picks the rim point when the frame lies flat (world vector or None).
    """
    nx, ny, nz = R[2], R[5], R[8]
    w_w = mv(R, w)
    c_w = mv(R, center)
    ux, uy, uz = nz * nx, nz * ny, nz * nz - 1.0
    un = math.sqrt(ux * ux + uy * uy + uz * uz)
    if un > 1e-6:
        d = (ux / un, uy / un, uz / un)
        nd = cross(w_w, (nx, ny, nz))
        ud = (nd[2] * nx + nz * nd[0], nd[2] * ny + nz * nd[1], nd[2] * nz + nz * nd[2])
        p = d[0] * ud[0] + d[1] * ud[1] + d[2] * ud[2]
        wc = cross(w_w, c_w)
        rho_dot = tuple(wc[k] + radius * (ud[k] - d[k] * p) / un for k in range(3))
    else:
        h = hint if hint is not None else (-R[1], -R[4], -R[7])
        hn = h[0] * nx + h[1] * ny + h[2] * nz
        h = (h[0] - hn * nx, h[1] - hn * ny, h[2] - hn * nz)
        s = math.sqrt(h[0] * h[0] + h[1] * h[1] + h[2] * h[2])
        d = (h[0] / s, h[1] / s, h[2] / s)
        rho_dot = cross(w_w, c_w)
    rho = (c_w[0] + radius * d[0], c_w[1] + radius * d[1], c_w[2] + radius * d[2])
    return rho, rho_dot, d


def contact_matrix(R, rho, inertia_inv, mass):
    """Map from a contact force to the contact-point acceleration: ``I/m - S R J^-1 R' S``."""
    M = mm(mm(R, inertia_inv), transpose(R))
    x, y, z = rho
    S = (0.0, -z, y, z, 0.0, -x, -y, x, 0.0)
    K = mm(mm(S, M), S)
    im = 1.0 / mass
    return (
        im - K[0], -K[1], -K[2],
        -K[3], im - K[4], -K[5],
        -K[6], -K[7], im - K[8],
    )


class Dynamics:
    """Right-hand side of the 13-state equations for one step (forces held)."""

    __slots__ = (
        "mass", "weight", "inertia", "inertia_inv", "center", "radius", "force", "torque",
        "spin_c", "spin_speed", "friction", "point", "slip_dir", "normal_prev", "hint",
    )

    def __init__(self, mass, gravity, inertia, inertia_inv, center, radius, force, torque,
                 spin_c, spin_speed, friction, point, slip_dir, normal_prev, hint):
        self.mass = mass
        self.weight = mass * gravity
        self.inertia = inertia
        self.inertia_inv = inertia_inv
        self.center = center
        self.radius = radius
        self.force = force  # body frame, external force already rotated in per stage
        self.torque = torque
        self.spin_c = spin_c
        self.spin_speed = spin_speed
        self.friction = friction
        self.point = point
        self.slip_dir = slip_dir
        self.normal_prev = normal_prev
        self.hint = hint

    def accel(self, R, w, ext_f):
        """Linear and angular (body) acceleration plus the contact force."""
        m = self.mass
        fb = mv(R, self.force)
        fw = (fb[0] + ext_f[0], fb[1] + ext_f[1], fb[2] + ext_f[2] - self.weight)
        Iw = mv(self.inertia, w)
        gyro = cross(w, Iw)
        tb = [self.torque[k] - gyro[k] for k in range(3)]
        if self.point:
            w_w = mv(R, w)
            spin = -self.spin_c * max(self.normal_prev, 0.0) * math.tanh(w_w[2] / self.spin_speed)
            tb[0] += spin * R[6]
            tb[1] += spin * R[7]
            tb[2] += spin * R[8]
        a0 = (fw[0] / m, fw[1] / m, fw[2] / m)
        alpha0 = mv(self.inertia_inv, tb)
        if not self.point:
            return a0, alpha0, (0.0, 0.0, 0.0)
        rho, rho_dot, _ = rim(R, w, self.center, self.radius, self.hint)
        w_w = mv(R, w)
        # a + alpha x rho + w x rho_dot = 0 with a, alpha affine in the contact force
        t1 = cross(mv(R, alpha0), rho)
        t2 = cross(w_w, rho_dot)
        rhs = (-a0[0] - t1[0] - t2[0], -a0[1] - t1[1] - t2[1], -a0[2] - t1[2] - t2[2])
        K = contact_matrix(R, rho, self.inertia_inv, m)
        if self.slip_dir is None:
            fc = solve3(K, rhs)
            if fc is None:
                raise ZeroDivisionError("singular contact matrix")
        else:
            mu = self.friction
            dirn = (mu * self.slip_dir[0], mu * self.slip_dir[1], 1.0)
            normal = rhs[2] / (K[6] * dirn[0] + K[7] * dirn[1] + K[8])
            fc = (normal * dirn[0], normal * dirn[1], normal)
        a = (a0[0] + fc[0] / m, a0[1] + fc[1] / m, a0[2] + fc[2] / m)
        da = mv(self.inertia_inv, mtv(R, cross(rho, fc)))
        return a, (alpha0[0] + da[0], alpha0[1] + da[1], alpha0[2] + da[2]), fc

    def deriv(self, y, ext_f):
        qw, qx, qy, qz = y[6], y[7], y[8], y[9]
        w = (y[10], y[11], y[12])
        a, alpha, fc = self.accel(rot((qw, qx, qy, qz)), w, ext_f)
        x2, y2, z2 = w
        return [
            y[3], y[4], y[5],
            a[0], a[1], a[2],
            0.5 * (-qx * x2 - qy * y2 - qz * z2),
            0.5 * (qw * x2 + qy * z2 - qz * y2),
            0.5 * (qw * y2 - qx * z2 + qz * x2),
            0.5 * (qw * z2 + qx * y2 - qy * x2),
            alpha[0], alpha[1], alpha[2],
        ], fc

    def rk4(self, y0, dt, ext_f, k1=None):
        """One RK4 step; returns the new state and the contact force of the first stage."""
        if k1 is None:
            k1, fc1 = self.deriv(y0, ext_f)
        else:
            k1, fc1 = k1
        h = 0.5 * dt
        k2, _ = self.deriv([a + h * b for a, b in zip(y0, k1)], ext_f)
        k3, _ = self.deriv([a + h * b for a, b in zip(y0, k2)], ext_f)
        k4, _ = self.deriv([a + dt * b for a, b in zip(y0, k3)], ext_f)
        s = dt / 6.0
        y = [a + s * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y0, k1, k2, k3, k4)]
        return y, fc1
