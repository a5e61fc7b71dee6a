"""Young integration, the Young differential equation solver, and a-priori bounds.

Systems have the semilinear form

    dy = [A y + f(y)] dt + g(y) dx

with declared constants: C_f bounds the drift through ||f(y)|| <= ||y|| h(||y||)
(h increasing and bounded by C_f), and C_g bounds g, Dg and the Lipschitz
constant of Dg.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .norms import p_variation, young_loeve_constant
from .paths import SampledPath, TimeGrid

log = logging.getLogger(__name__)


class BlowupError(RuntimeError):
    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"trajectory blow-up at step {index}")


def default_h(c0: float, c1: float) -> Callable[[float], float]:
    """Increasing drift-envelope family h(r) = c0 + c1 r/(1+r), bounded by c0+c1."""
    def h(r):
        return c0 + c1 * r / (1.0 + r)

    return h


@dataclass
class YoungSystem:
    A: np.ndarray
    f: Callable[[np.ndarray], np.ndarray] | None
    g: Callable[[np.ndarray], np.ndarray] | None  # y -> (d, m)
    C_f: float = 0.0
    C_g: float = 0.0
    h: Callable[[float], float] | None = None
    dg: Callable[[np.ndarray], np.ndarray] | None = None  # y -> (d, m, d), dg[a,j,b] = d g[a,j] / d y_b
    m: int = 1

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        d = self.A.shape[0]
        if self.A.shape != (d, d):
            raise ValueError("A must be square")
        self.d = d
        if self.f is not None:
            f0 = np.linalg.norm(self.drift_nonlinearity(np.zeros(d)))
            if f0 > 1e-12:
                raise ValueError("f(0) must vanish")
        if self.g is not None and np.linalg.norm(self.diffusion(np.zeros(d))) > 1e-12:
            log.warning("g(0) != 0: stability pipeline assumptions violated")

    def drift_nonlinearity(self, y: np.ndarray) -> np.ndarray:
        return np.zeros_like(y) if self.f is None else np.asarray(self.f(y), dtype=np.float64)

    def drift(self, y: np.ndarray) -> np.ndarray:
        return self.A @ y + self.drift_nonlinearity(y)

    def diffusion(self, y: np.ndarray) -> np.ndarray:
        if self.g is None:
            return np.zeros((self.d, self.m))
        out = np.asarray(self.g(y), dtype=np.float64)
        if out.ndim == 1:
            out = out[:, None]
        return out

    def spot_check_drift_envelope(self, rng_seed: int = 0, samples: int = 64, scale: float = 3.0) -> float:
        """Worst violation of ||f(y)|| <= ||y|| h(||y||) on random samples."""
        if self.f is None or self.h is None:
            return 0.0
        rng = np.random.default_rng(rng_seed)
        worst = 0.0
        for _ in range(samples):
            y = rng.standard_normal(self.d) * scale
            r = np.linalg.norm(y)
            worst = max(worst, np.linalg.norm(self.drift_nonlinearity(y)) - r * self.h(r))
        return worst


def young_integral(y: SampledPath, x: SampledPath, s: float | None = None, t: float | None = None) -> np.ndarray:
    """Left-point Riemann sum of int y dx over grid intervals in [s, t].

    Integrand values may be scalars (broadcast over dx), vectors matching
    x's dimension (contracted to a scalar), or (d, m) matrices (applied
    to dx).
    """
    if not np.array_equal(y.grid.points, x.grid.points):
        raise ValueError("misaligned grids")
    i = 0 if s is None else x.grid.index_of(s)
    j = x.grid.n if t is None else x.grid.index_of(t)
    if i >= j:
        raise ValueError("need s < t")
    yv = y.values[i:j]
    dx = np.diff(x.values[i : j + 1], axis=0)
    if yv.ndim == 3:  # matrix-valued integrand
        return np.einsum("uam,um->a", yv, dx)
    if yv.shape[1] == 1:  # scalar integrand
        return np.einsum("u,um->m", yv[:, 0], dx)
    if x.dim == 1:  # vector integrand against scalar driver
        return np.einsum("ua,u->a", yv, dx[:, 0])
    if yv.shape[1] == dx.shape[1]:
        return np.asarray(np.einsum("um,um->", yv, dx))
    raise ValueError("incompatible integrand/driver dimensions")


def solve_yde(sys: YoungSystem, x: SampledPath, y0: np.ndarray, scheme: str = "euler") -> SampledPath:
    """One-step solve of the Young system along the driver grid.

    euler:    y_{i+1} = y_i + (A y_i + f(y_i)) dt + g(y_i) dx_i
    milstein: adds 0.5 * Dg(y_i)[g(y_i) dx_i] dx_i (symmetric in the
              driver indices through dx (x) dx).
    """
    if scheme not in ("euler", "milstein"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "milstein" and sys.dg is None and sys.g is not None:
        raise ValueError("milstein scheme needs dg")
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    pts = x.grid.points
    dxs = np.diff(x.values, axis=0)
    max_kick = float(np.linalg.norm(dxs, axis=1).max(initial=0.0)) * sys.C_g
    if max_kick >= 1.0:
        log.warning("per-step driver increment times C_g = %.3g >= 1; grid may be too coarse", max_kick)
    out = np.empty((pts.size, y0.size))
    out[0] = y0
    y = y0.copy()
    for i in range(pts.size - 1):
        dt = pts[i + 1] - pts[i]
        dx = dxs[i]
        gy = sys.diffusion(y)
        y = y + sys.drift(y) * dt + gy @ dx
        if scheme == "milstein" and sys.g is not None:
            dgy = np.asarray(sys.dg(out[i]), dtype=np.float64)
            kick = np.einsum("ajb,b,j->a", dgy, gy @ dx, dx)
            y = y + 0.5 * kick
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > 1e12:
            raise BlowupError(i + 1)
        out[i + 1] = y
    return SampledPath(x.grid, out)


def apriori_bound(
    sys: YoungSystem,
    x: SampledPath,
    y0: np.ndarray,
    p: float,
    interval: tuple[float, float] | None = None,
    q: float | None = None,
) -> dict:
    """Growth bound from the driver's p-variation.

    F(z) = 4^p log2 max{||A|| + C_f, (K+1) C_g} [(b-a)^p + z^p], and
    the q-variation / sup-norm bounds ||y_a|| e^F and ||y_a|| (1 + e^F).
    """
    a, b = (x.grid.t0, x.grid.t1) if interval is None else interval
    q = p if q is None else q
    K = young_loeve_constant(p, q)
    xp = p_variation(x, p, a, b)
    A_norm = float(np.linalg.norm(sys.A, 2))
    coef = 4.0**p * np.log(2.0) * max(A_norm + sys.C_f, (K + 1.0) * sys.C_g)
    F = coef * ((b - a) ** p + xp**p)
    y0n = float(np.linalg.norm(np.atleast_1d(y0)))
    return {
        "F_value": float(F),
        "x_pvar": float(xp),
        "q_var_bound": y0n * float(np.exp(min(F, 700.0))),
        "sup_bound": y0n * (1.0 + float(np.exp(min(F, 700.0)))),
    }


def check_apriori(sys: YoungSystem, x: SampledPath, y: SampledPath, p: float, q: float | None = None) -> dict:
    """Assert the solver trajectory respects the a-priori bounds."""
    q = p if q is None else q
    bounds = apriori_bound(sys, x, y.values[0], p, q=q)
    sup = float(np.linalg.norm(y.values, axis=1).max())
    yq = p_variation(y, q)
    ok = sup <= bounds["sup_bound"] + 1e-9 and yq <= bounds["q_var_bound"] + 1e-9
    return {
        "passed": bool(ok),
        "sup_norm": sup,
        "q_variation": float(yq),
        **bounds,
    }
