"""Feasible control-torque polytope and propeller-tilt optimisation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .geometry import skew
from .isres import isres
from .robot_model import ROLLING_ANGLE, RobotModel, forward_kinematics

DESIGN_WEIGHTS = (4.0, 1.0)

# thrust along the link can only be positive, vectoring covers both signs
ALPHA_RANGES = ((0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))
SYMMETRIC_RANGES = ((-1.0, 1.0),) * 3


class DegenerateSetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TorqueGeneratorSet:
    vectors: np.ndarray  # (3n, 3), rows v_k per unit thrust
    ranges: tuple[tuple[float, float], ...]  # alpha range per row

    @property
    def triplets(self) -> np.ndarray:
        return self.vectors.reshape(-1, 3, 3)


def _rotor_maps(model: RobotModel, q) -> np.ndarray:
    """``([p_i x] + sigma_i E) R_cog_Li`` per rotor, shape (n, 3, 3)."""
    frames = forward_kinematics(model, q)
    return np.array(
        [
            (skew(frames.p[i]) + link.drag_ratio * np.eye(3)) @ frames.R_cog_L[i]
            for i, link in enumerate(model.links)
        ]
    )


def _generators(maps: np.ndarray, tilt) -> np.ndarray:
    t = np.asarray(tilt, dtype=float)
    scale = np.stack([np.sin(t), np.cos(t), np.cos(t)], axis=1)  # (n, 3)
    # column j of maps[i] scaled -> row 3i+j
    return (maps * scale[:, None, :]).transpose(0, 2, 1).reshape(-1, 3)


def torque_generators(model: RobotModel, q=(ROLLING_ANGLE, ROLLING_ANGLE), tilt=None) -> TorqueGeneratorSet:
    """Per-rotor torque directions for unit thrust.

    Rows ``3i .. 3i+2`` are the columns of
    ``([p_i x] + sigma_i E) R_cog_Li diag(sin t, cos t, cos t)``.
    """
    tilt = model.tilt if tilt is None else tilt
    vectors = _generators(_rotor_maps(model, q), tilt)
    return TorqueGeneratorSet(vectors, ALPHA_RANGES * len(model.links))


def facet_distances(vectors: np.ndarray, parallel_tol: float = 1e-9):
    """``d_ij`` for every non-parallel generator pair, with its unit normal."""
    v = np.asarray(vectors, dtype=float)
    out = []
    for i, j in itertools.combinations(range(len(v)), 2):
        n = np.cross(v[i], v[j])
        norm = np.linalg.norm(n)
        if norm < parallel_tol:
            continue
        n = n / norm
        out.append((i, j, float(np.sum(np.abs(v @ n))), n))
    return out


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(k: int):
    if k not in _PAIR_CACHE:
        ii, jj = np.triu_indices(k, 1)
        _PAIR_CACHE[k] = (ii, jj)
    return _PAIR_CACHE[k]


def min_feasible_torque(gen: TorqueGeneratorSet | np.ndarray, thrust_max: float = 1.0) -> float:
    """``thrust_max * min_ij sum_k |n_ij . v_k|`` over non-parallel pairs."""
    v = gen.vectors if isinstance(gen, TorqueGeneratorSet) else np.asarray(gen, dtype=float)
    ii, jj = _pairs(len(v))
    normals = np.cross(v[ii], v[jj])
    norms = np.linalg.norm(normals, axis=1)
    keep = norms >= 1e-9
    if not np.any(keep):
        raise DegenerateSetError("all generator pairs are parallel")
    normals = normals[keep] / norms[keep, None]
    return thrust_max * float(np.min(np.sum(np.abs(normals @ v.T), axis=1)))


def polytope_vertices(vectors: np.ndarray, ranges) -> np.ndarray:
    """All sums with each alpha at one end of its range."""
    v = np.asarray(vectors, dtype=float)
    ranges = tuple(ranges)
    if len(ranges) != len(v):
        # per-rotor pattern, repeated for every rotor
        ranges = ranges * (len(v) // len(ranges))
    combos = np.array(list(itertools.product(*ranges)))
    return combos @ v


def hull_min_distance(vectors: np.ndarray, ranges, thrust_max: float = 1.0) -> float:
    """Distance from the origin to the nearest facet of the vertex hull.

    Negative when the origin lies outside the hull.
    """
    pts = thrust_max * polytope_vertices(vectors, ranges)
    hull = ConvexHull(pts)
    # equations: n.x + b <= 0 inside, n unit
    return float(np.min(-hull.equations[:, 3]))


def hull_facets(vectors: np.ndarray, ranges, thrust_max: float = 1.0):
    pts = thrust_max * polytope_vertices(vectors, ranges)
    hull = ConvexHull(pts)
    return hull.equations, pts[hull.vertices]


def design_objective(
    tilt,
    model: RobotModel,
    w1: float = DESIGN_WEIGHTS[0],
    w2: float = DESIGN_WEIGHTS[1],
    q=(ROLLING_ANGLE, ROLLING_ANGLE),
) -> float:
    return _objective(np.asarray(tilt, dtype=float), _rotor_maps(model, q), w1, w2)


def _objective(tilt: np.ndarray, maps: np.ndarray, w1: float, w2: float) -> float:
    if np.any(np.abs(tilt) >= np.pi / 2):
        raise ValueError("|tilt| must be below pi/2")
    return w1 * min_feasible_torque(_generators(maps, tilt), 1.0) - w2 * float(tilt @ tilt)


@dataclass(frozen=True, eq=False)
class DesignResult:
    tilt: np.ndarray
    tau_min: float
    objective: float
    evaluations: int
    seed: int
    tau_min_untilted: float
    objective_untilted: float


def optimize_tilt(
    model: RobotModel,
    bounds: tuple[float, float] = (-0.5, 0.5),
    w1: float = DESIGN_WEIGHTS[0],
    w2: float = DESIGN_WEIGHTS[1],
    seed: int = 0,
    max_evals: int = 20_000,
    mu: int = 15,
    lam: int = 105,
) -> DesignResult:
    """Maximise ``w1 tau_min / lambda_max - w2 |theta|^2`` with ISRES.

    The untilted design is injected into the first generation, so the result
    is never worse than it.
    """
    n = len(model.links)
    lo, hi = np.full(n, bounds[0]), np.full(n, bounds[1])
    start = [np.clip(np.zeros(n), lo, hi)]
    maps = _rotor_maps(model, (ROLLING_ANGLE, ROLLING_ANGLE))
    res = isres(
        lambda t: -_objective(t, maps, w1, w2),
        lo,
        hi,
        mu=mu,
        lam=lam,
        max_evals=max_evals,
        seed=seed,
        initial=start,
    )
    zero = np.zeros(n)
    return DesignResult(
        tilt=res.x,
        tau_min=min_feasible_torque(torque_generators(model, tilt=res.x), model.thrust_max),
        objective=-res.fun,
        evaluations=res.evaluations,
        seed=seed,
        tau_min_untilted=min_feasible_torque(torque_generators(model, tilt=zero), model.thrust_max),
        objective_untilted=design_objective(zero, model, w1, w2),
    )
