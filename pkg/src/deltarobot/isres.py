"""Improved stochastic-ranking evolution strategy (ISRES).

Bound-constrained minimisation with optional inequality constraints
``g(x) <= 0``. Ranking mixes objective and constraint violation by stochastic
bubble sort; offspring come from lognormal self-adaptive mutation plus a
differential-variation step for the top parents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class OptimizerError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EsResult:
    x: np.ndarray
    fun: float
    violation: float
    evaluations: int
    generations: int
    seed: int


def stochastic_rank(f: np.ndarray, phi: np.ndarray, rng: np.random.Generator, pf: float = 0.45) -> np.ndarray:
    """Return indices sorted by stochastic ranking."""
    n = f.size
    if not np.any(phi):
        # all feasible: the bubble sort degenerates to a stable sort on f
        return np.argsort(f, kind="stable")
    order = np.arange(n)
    for _ in range(n):
        swapped = False
        u = rng.random(n - 1)
        for j in range(n - 1):
            a, b = order[j], order[j + 1]
            if (phi[a] == 0.0 and phi[b] == 0.0) or u[j] < pf:
                swap = f[a] > f[b]
            else:
                swap = phi[a] > phi[b]
            if swap:
                order[j], order[j + 1] = b, a
                swapped = True
        if not swapped:
            break
    return order


def isres(
    fun: Callable[[np.ndarray], float],
    lower: Sequence[float],
    upper: Sequence[float],
    *,
    constraints: Sequence[Callable[[np.ndarray], float]] = (),
    mu: int = 15,
    lam: int = 105,
    max_evals: int = 20_000,
    seed: int = 0,
    pf: float = 0.45,
    gamma: float = 0.85,
    alpha: float = 0.2,
    initial: Sequence[np.ndarray] = (),
    tol_sigma: float = 0.0,
) -> EsResult:
    """Minimise ``fun`` over the box ``[lower, upper]``.

    ``initial`` points are injected into the first population. The best
    feasible point seen is returned.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != hi.shape or np.any(lo > hi):
        raise OptimizerError("empty bounds")
    n = lo.size
    rng = np.random.default_rng(seed)
    tau = 1.0 / np.sqrt(2.0 * np.sqrt(n))
    tau_p = 1.0 / np.sqrt(2.0 * n)
    sigma_max = (hi - lo) / np.sqrt(n)

    x = lo + (hi - lo) * rng.random((lam, n))
    for k, p in enumerate(initial[:lam]):
        x[k] = np.clip(p, lo, hi)
    sig = np.tile(sigma_max, (lam, 1))

    best_x, best_f, best_phi = None, np.inf, np.inf
    evals = 0
    gen = 0
    while evals + lam <= max_evals:
        gen += 1
        f = np.array([fun(xi) for xi in x], dtype=float)
        if constraints:
            phi = np.array([sum(max(0.0, g(xi)) ** 2 for g in constraints) for xi in x])
        else:
            phi = np.zeros(lam)
        evals += lam
        f = np.where(np.isfinite(f), f, np.inf)
        for k in range(lam):
            if (phi[k], f[k]) < (best_phi, best_f):
                best_x, best_f, best_phi = x[k].copy(), f[k], phi[k]

        order = stochastic_rank(f, phi, rng, pf)
        parents = x[order[:mu]]
        psig = sig[order[:mu]]
        if tol_sigma > 0.0 and np.max(psig) < tol_sigma:
            break

        new_x = np.empty_like(x)
        new_sig = np.empty_like(sig)
        for k in range(lam):
            i = k % mu
            if k < mu - 1:
                # differential variation towards the best parent
                new_sig[k] = psig[i]
                cand = parents[i] + gamma * (parents[0] - parents[i + 1])
            else:
                s = psig[i] * np.exp(tau_p * rng.normal() + tau * rng.normal(size=n))
                new_sig[k] = np.minimum(s, sigma_max)
                cand = parents[i] + new_sig[k] * rng.normal(size=n)
            for _ in range(10):
                bad = (cand < lo) | (cand > hi)
                if not bad.any():
                    break
                cand = np.where(bad, parents[i] + new_sig[k] * rng.normal(size=n), cand)
            cand = np.clip(cand, lo, hi)
            if k >= mu - 1:
                new_sig[k] = psig[i] + alpha * (new_sig[k] - psig[i])
            new_x[k] = cand
        x, sig = new_x, new_sig

    if best_x is None:
        raise OptimizerError("evaluation budget exhausted before any evaluation")
    if best_phi > 0.0 or not np.isfinite(best_f):
        raise OptimizerError(
            f"no feasible point found in {evals} evaluations (least violation {best_phi:.3e})"
        )
    return EsResult(best_x, float(best_f), float(best_phi), evals, gen, seed)
