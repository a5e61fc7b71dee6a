"""Hölder and exact p-variation seminorms, controls, and the variation lemma check.

Every seminorm here is a grid-restricted supremum (or sup over grid
partitions).  That is a conservative lower bound for the continuum
quantity and is the single convention used throughout the package:
greedy times, a-priori bounds, and stability criteria all consume these
values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._pvar import pvar_sum
from .paths import RoughLift, SampledPath, TimeGrid

_BLOCK = 256  # row-block size for O(n^2) pairwise sweeps


@dataclass(frozen=True)
class NormConfig:
    """Exponents used together: variation pair (p, q), Hölder alpha, regularity nu."""

    p: float
    q: float
    alpha: float
    nu: float = 1.0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError("variation exponents must be >= 1")
        if 1.0 / self.p + 1.0 / self.q <= 1.0:
            raise ValueError("Young pairing violated")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0,1)")
        if self.alpha >= self.nu:
            raise ValueError("alpha must be < nu")


def young_loeve_constant(p: float, q: float) -> float:
    """K(p,q) = (1 - 2^{1 - 1/p - 1/q})^{-1}, finite iff 1/p + 1/q > 1."""
    if 1.0 / p + 1.0 / q <= 1.0:
        raise ValueError("Young pairing violated")
    return 1.0 / (1.0 - 2.0 ** (1.0 - 1.0 / p - 1.0 / q))


def _resolve_range(grid: TimeGrid, s, t) -> tuple[int, int]:
    i = 0 if s is None else grid.index_of(s)
    j = grid.n if t is None else grid.index_of(t)
    if i >= j:
        raise ValueError("need s < t on the grid")
    return i, j


def max_holder_ratio(values: np.ndarray, times: np.ndarray, alpha: float) -> float:
    """sup over pairs u < v of ||x_v - x_u|| / (t_v - t_u)^alpha."""
    k = values.shape[0]
    best = 0.0
    for a in range(0, k - 1, _BLOCK):
        b = min(a + _BLOCK, k - 1)
        # pairs (i, j) with i in [a, b), j > i
        diffs = values[None, a + 1 :, :] - values[a:b, None, :]
        dt = times[None, a + 1 :] - times[a:b, None]
        mask = dt > 0
        norms = np.linalg.norm(diffs, axis=2)
        ratio = np.where(mask, norms / np.where(mask, dt, 1.0) ** alpha, 0.0)
        m = ratio.max(initial=0.0)
        if m > best:
            best = m
    return float(best)


def holder_seminorm(path: SampledPath, alpha: float, s: float | None = None, t: float | None = None) -> float:
    """Grid-restricted alpha-Hölder seminorm of the path on [s, t]."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0,1]")
    i, j = _resolve_range(path.grid, s, t)
    return max_holder_ratio(path.values[i : j + 1], path.grid.points[i : j + 1], alpha)


def p_variation(path: SampledPath, p: float, s: float | None = None, t: float | None = None) -> float:
    """Exact grid p-variation seminorm on [s, t] (p-th root of the DP value)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    i, j = _resolve_range(path.grid, s, t)
    return pvar_sum(path.values[i : j + 1], p) ** (1.0 / p)


def max_levy_ratio(lift: RoughLift, alpha: float, i: int, j: int) -> float:
    """sup over grid pairs in [i, j] of ||X_{u,v}||_F / (t_v - t_u)^{2alpha}."""
    pref = lift.prefix()[i : j + 1]
    vals = lift.path.values[i : j + 1]
    base = vals - lift.path.values[0]
    times = lift.grid.points[i : j + 1]
    k = vals.shape[0]
    best = 0.0
    for a in range(0, k - 1, _BLOCK):
        b = min(a + _BLOCK, k - 1)
        X = pref[None, a + 1 :] - pref[a:b, None]
        inc = vals[None, a + 1 :, :] - vals[a:b, None, :]
        X = X - np.einsum("abp,aq->abpq", inc, base[a:b])
        dt = times[None, a + 1 :] - times[a:b, None]
        mask = dt > 0
        norms = np.sqrt((X**2).sum(axis=(2, 3)))
        ratio = np.where(mask, norms / np.where(mask, dt, 1.0) ** (2.0 * alpha), 0.0)
        m = ratio.max(initial=0.0)
        if m > best:
            best = m
    return float(best)


def rough_seminorm(lift: RoughLift, alpha: float, s: float | None = None, t: float | None = None) -> float:
    """⟦x⟧_alpha + ⟦X⟧_{2alpha}^{1/2} with both sups grid-restricted."""
    if not 1.0 / 3.0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (1/3, 1/2]")
    i, j = _resolve_range(lift.grid, s, t)
    hol = max_holder_ratio(lift.path.values[i : j + 1], lift.grid.points[i : j + 1], alpha)
    lev = max_levy_ratio(lift, alpha, i, j)
    return hol + np.sqrt(lev)


@dataclass(frozen=True)
class ControlValues:
    """Two-parameter functional omega(s, t) expected to be a control."""

    evaluator: Callable[[float, float], float]

    def __call__(self, s: float, t: float) -> float:
        return float(self.evaluator(s, t))


def check_control(omega: ControlValues, grid: TimeGrid, max_triples: int = 10**6, seed: int = 0) -> dict:
    """Verify zero-diagonal and superadditivity on grid triples.

    Above `max_triples` triples a seeded random subsample is used.
    Report-only: returns worst violations instead of raising.
    """
    pts = grid.points
    k = pts.size
    diag_worst = max(abs(omega(t, t)) for t in pts)
    total = k * (k - 1) * (k - 2) // 6
    if total <= max_triples:
        triples = [
            (i, j, l) for i in range(k) for j in range(i + 1, k) for l in range(j + 1, k)
        ]
    else:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.integers(0, k, size=(max_triples, 3)), axis=1)
        idx = idx[(idx[:, 0] < idx[:, 1]) & (idx[:, 1] < idx[:, 2])]
        triples = [tuple(row) for row in idx]
    worst = 0.0
    worst_triple = None
    for i, j, l in triples:
        gap = omega(pts[i], pts[j]) + omega(pts[j], pts[l]) - omega(pts[i], pts[l])
        if gap > worst:
            worst = gap
            worst_triple = (float(pts[i]), float(pts[j]), float(pts[l]))
    passed = diag_worst <= 1e-12 and worst <= 1e-12
    return {
        "passed": bool(passed),
        "diagonal_worst": float(diag_worst),
        "superadditivity_worst_violation": float(worst),
        "worst_triple": worst_triple,
        "triples_checked": len(triples),
    }


def check_variation_bound(
    theta: SampledPath,
    gamma: ControlValues,
    Lambda: Callable[[float, float], float],
    x: SampledPath,
    cfg: NormConfig,
    K: float,
) -> dict:
    """Check that the variation implication holds on every grid pair.

    Hypothesis on [s,t]:
        ⟦θ⟧_q <= γ(s,t) + Λ⟦x⟧_p + 2KΛ⟦x⟧_p ⟦θ⟧_q
    Conclusion on [s,t]:
        ⟦θ⟧_q <= 2γ(s,t) + 2Λ⟦x⟧_p + (2K)^{p-1} (2Λ)^p ⟦x⟧_p^p

    Pairs where the hypothesis holds but the conclusion fails would
    falsify the implementation and are flagged.
    """
    if not np.array_equal(theta.grid.points, x.grid.points):
        raise ValueError("misaligned grids")
    pts = theta.grid.points
    k = pts.size
    p = cfg.p
    cond_pairs = 0
    concl_fail = []
    worst_margin = np.inf
    for i in range(k - 1):
        for j in range(i + 1, k):
            s, t = float(pts[i]), float(pts[j])
            th = p_variation(theta, cfg.q, s, t)
            xp = p_variation(x, p, s, t)
            lam = float(Lambda(s, t))
            g = gamma(s, t)
            cond = th <= g + lam * xp + 2.0 * K * lam * xp * th + 1e-12
            if not cond:
                continue
            cond_pairs += 1
            bound = 2.0 * g + 2.0 * lam * xp + (2.0 * K) ** (p - 1.0) * (2.0 * lam) ** p * xp**p
            margin = bound - th
            worst_margin = min(worst_margin, margin)
            if margin < -1e-10:
                concl_fail.append((s, t, th, bound))
    return {
        "passed": not concl_fail,
        "pairs_total": k * (k - 1) // 2,
        "pairs_hypothesis_holds": cond_pairs,
        "conclusion_failures": concl_fail,
        "worst_margin": None if cond_pairs == 0 else float(worst_margin),
    }
