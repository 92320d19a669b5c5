"""Dense ADMM solver for small convex QPs.

    minimize    1/2 x'Px + q'x
    subject to  A_eq x = b_eq
                lower <= A_in x <= upper

Operator splitting in the style of OSQP: Ruiz equilibration, a single
Cholesky factorisation per problem, over-relaxed ADMM iterations, primal and
dual infeasibility certificates, and active-set polishing to reach tight
tolerances.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SOLVED = "solved"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def _mat(a, rows: int | None, cols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, cols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, cols))
    if a.shape[1] != cols or (rows is not None and a.shape[0] != rows):
        raise ValueError(f"matrix has shape {a.shape}, expected (*, {cols})")
    return a


def _vec(v, n: int, fill: float = 0.0) -> np.ndarray:
    if v is None:
        return np.full(n, fill)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"vector has length {v.size}, expected {n}")
    return v


@dataclass(frozen=True, eq=False)
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    A_in: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n):
            raise ValueError("P must be square")
        P = 0.5 * (P + P.T)
        if n and np.min(np.linalg.eigvalsh(P)) < -1e-10:
            raise ValueError("P must be positive semidefinite")
        A_eq = _mat(self.A_eq, None, n)
        A_in = _mat(self.A_in, None, n)
        lower = _vec(self.lower, A_in.shape[0], -np.inf)
        upper = _vec(self.upper, A_in.shape[0], np.inf)
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        for name, value in (
            ("P", P),
            ("q", _vec(self.q, n)),
            ("A_eq", A_eq),
            ("b_eq", _vec(self.b_eq, A_eq.shape[0])),
            ("A_in", A_in),
            ("lower", lower),
            ("upper", upper),
        ):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def m_in(self) -> int:
        return self.A_in.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x)

    def stacked(self):
        """Single two-sided form ``l <= A x <= u`` (equalities first)."""
        A = np.vstack([self.A_eq, self.A_in])
        return A, np.concatenate([self.b_eq, self.lower]), np.concatenate([self.b_eq, self.upper])


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    polished: bool = False

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


def kkt_residuals(problem: QpProblem, solution: QpSolution) -> tuple[float, float, float]:
    """(primal, dual, complementarity) infinity-norm residuals.

    The inequality duals follow the convention ``y > 0`` on an active upper
    bound and ``y < 0`` on an active lower bound. Always finite.
    """
    x = np.nan_to_num(np.asarray(solution.x, dtype=float))
    y_eq = np.nan_to_num(np.asarray(solution.y_eq, dtype=float))
    y_in = np.nan_to_num(np.asarray(solution.y_in, dtype=float))
    ax_in = problem.A_in @ x
    viol = [np.abs(problem.A_eq @ x - problem.b_eq)]
    viol.append(np.maximum(problem.lower - ax_in, 0.0))
    viol.append(np.maximum(ax_in - problem.upper, 0.0))
    primal = max((float(np.max(v)) for v in viol if v.size), default=0.0)
    stat = problem.P @ x + problem.q + problem.A_eq.T @ y_eq + problem.A_in.T @ y_in
    dual = float(np.max(np.abs(stat))) if stat.size else 0.0
    up = np.maximum(y_in, 0.0)
    lo = np.maximum(-y_in, 0.0)
    gap_up = np.where(np.isfinite(problem.upper), problem.upper - ax_in, 1.0)
    gap_lo = np.where(np.isfinite(problem.lower), ax_in - problem.lower, 1.0)
    comp = np.concatenate([up * np.abs(gap_up), lo * np.abs(gap_lo)])
    compl = float(np.max(comp)) if comp.size else 0.0
    return primal, dual, compl


@dataclass
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    tol_p: float = 1e-8
    tol_d: float = 1e-8
    max_iter: int = 20_000
    scaling_iters: int = 10
    eps_infeasible: float = 1e-5
    polish: bool = True
    polish_every: int = 5
    polish_threshold: float = 1.0
    check_every: int = 5
    rho_eq_factor: float = 1e3


@dataclass
class QpSolver:
    """Holds the mutable ADMM workspace; use one instance per thread."""

    settings: QpSettings = field(default_factory=QpSettings)

    def solve(self, problem: QpProblem, warm_start: QpSolution | None = None) -> QpSolution:
        s = self.settings
        n = problem.n
        A, l, u = problem.stacked()
        m = A.shape[0]
        if n == 0:
            return QpSolution(np.zeros(0), np.zeros(problem.m_eq), np.zeros(problem.m_in), SOLVED, 0.0, 0.0, 0)

        D, E, c = _ruiz(problem.P, problem.q, A, s.scaling_iters)
        Ps = c * (D[:, None] * problem.P * D[None, :])
        qs = c * D * problem.q
        As = E[:, None] * A * D[None, :]
        ls = E * l
        us = E * u

        rho = np.full(m, s.rho)
        eq_rows = np.isfinite(l) & np.isfinite(u) & (np.abs(u - l) < 1e-12)
        free_rows = ~np.isfinite(l) & ~np.isfinite(u)
        rho[eq_rows] *= s.rho_eq_factor
        rho[free_rows] = 1e-6
        kkt = Ps + s.sigma * np.eye(n) + As.T @ (rho[:, None] * As)
        # n is tiny: one factorisation, then every x-update is two mat-vecs
        kinv = cho_solve(cho_factor(kkt), np.eye(n))
        k_sigma = s.sigma * kinv
        k_a = kinv @ As.T
        k_q = -kinv @ qs

        if warm_start is not None and warm_start.x.shape == (n,):
            x = warm_start.x / D
            y = np.concatenate([warm_start.y_eq, warm_start.y_in]) * c / E
            z = np.clip(As @ x, ls, us)
        else:
            x = np.zeros(n)
            y = np.zeros(m)
            z = np.clip(np.zeros(m), ls, us)

        Einv = 1.0 / E
        alpha = s.alpha
        status = MAX_ITER
        it = 0
        best = None
        for it in range(1, s.max_iter + 1):
            xt = k_sigma @ x + k_a @ (rho * z - y) + k_q
            zt = As @ xt
            x_new = alpha * xt + (1.0 - alpha) * x
            zr = alpha * zt + (1.0 - alpha) * z
            z_new = np.clip(zr + y / rho, ls, us)
            y_new = y + rho * (zr - z_new)
            check = it == 1 or it % s.check_every == 0
            if check:
                dy = y_new - y
                dx = x_new - x
            x, z, y = x_new, z_new, y_new
            if not check:
                continue

            x_u = D * x
            y_u = E * y / c
            r_p = float(np.max(np.abs(Einv * (As @ x - z)))) if m else 0.0
            r_d = float(np.max(np.abs(problem.P @ x_u + problem.q + A.T @ y_u)))
            if r_p <= s.tol_p and r_d <= s.tol_d:
                status = SOLVED
                best = (x_u, y_u, r_p, r_d, False)
                break
            if m and _primal_infeasible(A, l, u, E * dy / c, s.eps_infeasible):
                status = INFEASIBLE
                best = (x_u, y_u, r_p, r_d, False)
                break
            if _dual_infeasible(problem.P, problem.q, A, l, u, D * dx, s.eps_infeasible):
                status = UNBOUNDED
                best = (x_u, y_u, r_p, r_d, False)
                break
            if s.polish and it % s.polish_every == 0 and max(r_p, r_d) < s.polish_threshold:
                polished = _polish(problem, A, l, u, x_u, A @ x_u, y_u, s)
                if polished is not None:
                    status = SOLVED
                    best = polished
                    break

        if best is None:
            x_u, y_u = D * x, E * y / c
            r_p = float(np.max(np.abs(Einv * (As @ x - z)))) if m else 0.0
            r_d = float(np.max(np.abs(problem.P @ x_u + problem.q + A.T @ y_u)))
            best = (x_u, y_u, r_p, r_d, False)
        x_u, y_u, r_p, r_d, pol = best
        me = problem.m_eq
        return QpSolution(
            x=x_u,
            y_eq=y_u[:me].copy(),
            y_in=y_u[me:].copy(),
            status=status,
            primal_residual=r_p,
            dual_residual=r_d,
            iterations=it,
            polished=pol,
        )


def solve(
    problem: QpProblem,
    tol_p: float = 1e-8,
    tol_d: float = 1e-8,
    max_iter: int = 20_000,
    warm_start: QpSolution | None = None,
    **settings,
) -> QpSolution:
    solver = QpSolver(QpSettings(tol_p=tol_p, tol_d=tol_d, max_iter=max_iter, **settings))
    return solver.solve(problem, warm_start=warm_start)


def _ruiz(P, q, A, iters: int):
    n, m = P.shape[0], A.shape[0]
    D, E = np.ones(n), np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col_x = np.abs(Ps).max(axis=0)
        if m:
            col_x = np.maximum(col_x, np.abs(As).max(axis=0))
        dx = 1.0 / np.sqrt(np.clip(col_x, 1e-4, 1e4))
        if m:
            col_z = np.max(np.abs(As), axis=1)
            dz = 1.0 / np.sqrt(np.clip(col_z, 1e-4, 1e4))
        else:
            dz = np.ones(0)
        Ps = dx[:, None] * Ps * dx[None, :]
        As = dz[:, None] * As * dx[None, :]
        D *= dx
        E *= dz
        if np.all(np.abs(dx - 1.0) < 1e-3) and np.all(np.abs(dz - 1.0) < 1e-3):
            break
    qs = D * q
    scale = max(float(np.mean(np.max(np.abs(Ps), axis=0))), float(np.max(np.abs(qs))) if qs.size else 0.0)
    c = 1.0 / np.clip(scale, 1e-4, 1e4)
    return D, E, c


def _primal_infeasible(A, l, u, dy, eps) -> bool:
    norm = float(np.max(np.abs(dy)))
    if norm < 1e-12:
        return False
    if np.max(np.abs(A.T @ dy)) > eps * norm:
        return False
    pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
    if np.any((pos > eps * norm) & ~np.isfinite(u)) or np.any((neg < -eps * norm) & ~np.isfinite(l)):
        return False
    support = np.sum(np.where(pos > 0, pos * np.where(np.isfinite(u), u, 0.0), 0.0))
    support += np.sum(np.where(neg < 0, neg * np.where(np.isfinite(l), l, 0.0), 0.0))
    return support < -eps * norm


def _dual_infeasible(P, q, A, l, u, dx, eps) -> bool:
    norm = float(np.max(np.abs(dx)))
    if norm < 1e-12:
        return False
    if q @ dx > -eps * norm:
        return False
    if np.max(np.abs(P @ dx)) > eps * norm:
        return False
    adx = A @ dx
    ok_up = np.where(np.isfinite(u), adx <= eps * norm, True)
    ok_lo = np.where(np.isfinite(l), adx >= -eps * norm, True)
    return bool(np.all(ok_up & ok_lo))


def _polish(problem: QpProblem, A, l, u, x, z, y, s: QpSettings):
    """Solve the equality-constrained QP on the guessed active set."""
    lower_act = (z - l) < -y
    upper_act = (u - z) < y
    eq = np.isfinite(l) & np.isfinite(u) & (np.abs(u - l) < 1e-12)
    act = lower_act | upper_act | eq
    idx = np.flatnonzero(act)
    b = np.where(upper_act & ~lower_act, u, l)[idx]
    b = np.where(eq[idx], l[idx], b)
    n, k = problem.n, idx.size
    K = np.zeros((n + k, n + k))
    K[:n, :n] = problem.P
    K[:n, n:] = A[idx].T
    K[n:, :n] = A[idx]
    rhs = np.concatenate([-problem.q, b])
    result = None
    try:
        sol = np.linalg.solve(K, rhs)
        sol = sol + np.linalg.solve(K, rhs - K @ sol)
        result = _polish_check(problem, A, l, u, sol, idx, eq, lower_act, upper_act, s)
    except np.linalg.LinAlgError:
        pass
    if result is None:
        # redundant active rows make K singular; fall back to least squares
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        for _ in range(3):
            sol = sol + np.linalg.lstsq(K, rhs - K @ sol, rcond=None)[0]
        result = _polish_check(problem, A, l, u, sol, idx, eq, lower_act, upper_act, s)
    return result


def _polish_check(problem, A, l, u, sol, idx, eq, lower_act, upper_act, s):
    n = problem.n
    if not np.all(np.isfinite(sol)):
        return None
    xp = sol[:n]
    yp = np.zeros(A.shape[0])
    yp[idx] = sol[n:]
    ax = A @ xp
    r_p = float(max(np.max(np.maximum(l - ax, 0.0), initial=0.0), np.max(np.maximum(ax - u, 0.0), initial=0.0)))
    r_d = float(np.max(np.abs(problem.P @ xp + problem.q + A.T @ yp)))
    if r_p > s.tol_p or r_d > s.tol_d:
        return None
    # dual signs must agree with the side of the bound that is active
    tol = max(s.tol_d, 1e-12)
    ineq = ~eq
    if np.any(yp[ineq & lower_act & ~upper_act] > tol) or np.any(yp[ineq & upper_act & ~lower_act] < -tol):
        return None
    return xp, yp, r_p, r_d, True


def dump_problem(problem: QpProblem, path=None) -> str:
    """Plain-text dump; floats are written with ``repr`` so reloading is exact."""
    out = io.StringIO()
    out.write("# deltarobot qp v1\n")

    def block(name, arr):
        arr = np.atleast_2d(arr) if np.ndim(arr) == 2 else np.asarray(arr).reshape(1, -1)
        rows = arr.shape[0] if arr.size else 0
        out.write(f"{name} {rows}\n")
        for row in arr[:rows]:
            out.write(" ".join(repr(float(v)) for v in row) + "\n")

    out.write(f"n {problem.n}\n")
    block("P", problem.P)
    block("q", problem.q)
    block("A_eq", problem.A_eq)
    block("b_eq", problem.b_eq)
    block("A_in", problem.A_in)
    block("lower", problem.lower)
    block("upper", problem.upper)
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_problem(source) -> QpProblem:
    text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    it = iter(lines)
    head = next(it).split()
    n = int(head[1])
    blocks = {}
    for line in it:
        name, rows = line.split()
        rows = int(rows)
        data = [[float(v) for v in next(it).split()] for _ in range(rows)]
        blocks[name] = np.array(data, dtype=float) if rows else np.zeros((0,))

    def vec(name):
        b = blocks[name]
        return b.reshape(-1) if b.size else np.zeros(0)

    def mat(name):
        b = blocks[name]
        return b.reshape(-1, n) if b.size else np.zeros((0, n))

    return QpProblem(
        P=mat("P"),
        q=vec("q"),
        A_eq=mat("A_eq"),
        b_eq=vec("b_eq"),
        A_in=mat("A_in"),
        lower=vec("lower"),
        upper=vec("upper"),
    )
