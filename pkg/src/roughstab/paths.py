"""Time grids, sampled Gaussian drivers, and second-level rough lifts.

A driver is held as its values on a finite grid.  Its canonical
(geometric) lift stores one Lévy-area matrix per grid segment; areas
over larger index ranges are composed with Chen's relation

    X[i,j] = X[i,k] + X[k,j] + x[k,j] (x) x[i,k]

where (a (x) b)_{jk} = a_j b_k.  Entrywise this means
X^{jk}_{s,t} = int_s^t x^k_{s,r} dx^j_r: the first index is the
integrator.  A cumulative prefix table makes any X[i,j] an O(1) lookup.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_CHEN_TOL = 1e-12


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points t0 = points[0] < ... < points[n] = t1."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise GridError("grid needs at least two points")
        if not np.all(np.diff(pts) > 0):
            raise GridError("grid points must be strictly increasing")

    @classmethod
    def uniform(cls, t0: float, t1: float, n: int) -> "TimeGrid":
        if n < 1:
            raise GridError("n must be >= 1")
        return cls(t0 + (t1 - t0) * np.arange(n + 1) / n)

    @property
    def t0(self) -> float:
        return float(self.points[0])

    @property
    def t1(self) -> float:
        return float(self.points[-1])

    @property
    def n(self) -> int:
        return self.points.size - 1

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.points)

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        d = self.spacings
        return bool(d.max() - d.min() <= rtol * d.max())

    def index_of(self, t: float) -> int:
        """Index of grid point equal to t (within a tight tolerance)."""
        i = int(np.searchsorted(self.points, t))
        span = self.t1 - self.t0
        for j in (i - 1, i, i + 1):
            if 0 <= j <= self.n and abs(self.points[j] - t) <= 1e-9 * span:
                return j
        raise GridError(f"time {t} is not a grid point")

    def refine(self, factor: int) -> "TimeGrid":
        """Insert factor-1 equally spaced points into every segment."""
        p = self.points
        seg = np.linspace(0.0, 1.0, factor, endpoint=False)
        fine = (p[:-1, None] + np.diff(p)[:, None] * seg[None, :]).ravel()
        return TimeGrid(np.append(fine, p[-1]))


@dataclass(frozen=True)
class SampledPath:
    """Vector-valued path sampled on a grid; shape (n+1, m)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)
        if vals.shape[0] != self.grid.n + 1:
            raise GridError("values length must equal grid.n + 1")
        if not np.all(np.isfinite(vals)):
            raise GridError("path values must be finite")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation of the sampled values."""
        pts = self.grid.points
        if t <= pts[0]:
            return self.values[0].copy()
        if t >= pts[-1]:
            return self.values[-1].copy()
        i = int(np.searchsorted(pts, t, side="right")) - 1
        w = (t - pts[i]) / (pts[i + 1] - pts[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def increment(self, s: float, t: float) -> np.ndarray:
        return self.value_at(t) - self.value_at(s)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def restrict(self, i: int, j: int) -> "SampledPath":
        return SampledPath(TimeGrid(self.grid.points[i : j + 1]), self.values[i : j + 1])


def _fgn_davies_harte(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """One realisation of unit-spacing fractional Gaussian noise, length n.

    Circulant embedding of the fGn autocovariance; exact in distribution
    when the embedding eigenvalues are nonnegative.  Raises ValueError
    otherwise (caller falls back to Cholesky).
    """
    k = np.arange(n + 1, dtype=np.float64)
    rho = 0.5 * (
        np.abs(k + 1.0) ** (2 * hurst) + np.abs(k - 1.0) ** (2 * hurst)
    ) - np.abs(k) ** (2 * hurst)
    c = np.concatenate([rho[:n], [rho[n]], rho[1:n][::-1]])
    g = np.fft.fft(c).real
    if np.min(g) < -1e-10 * np.max(g):
        raise ValueError("circulant embedding not nonnegative definite")
    g = np.clip(g, 0.0, None)

    two_n = 2 * n
    z = np.zeros(two_n, dtype=np.complex128)
    z[0] = rng.standard_normal()
    z[n] = rng.standard_normal()
    v = rng.standard_normal((n - 1, 2))
    z[1:n] = (v[:, 0] + 1j * v[:, 1]) / np.sqrt(2.0)
    z[n + 1 :] = np.conj(z[1:n][::-1])
    fgn = np.sqrt(two_n) * np.fft.ifft(np.sqrt(g) * z).real[:n]
    return fgn


def _fgn_cholesky(n: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    i = np.arange(n, dtype=np.float64)
    lag = np.abs(i[:, None] - i[None, :])
    cov = 0.5 * (
        np.abs(lag + 1.0) ** (2 * hurst)
        + np.abs(lag - 1.0) ** (2 * hurst)
        - 2.0 * lag ** (2 * hurst)
    )
    chol = np.linalg.cholesky(cov + 1e-14 * np.eye(n))
    return chol @ rng.standard_normal(n)


def sample_fbm(hurst: float, grid: TimeGrid, dim: int = 1, seed: int = 0) -> SampledPath:
    """Sample `dim` independent fBm components on a uniform grid.

    Starts at zero; increments have the exact stationary covariance
    R(s,t) = 0.5(|s|^{2H} + |t|^{2H} - |t-s|^{2H}).  Deterministic for a
    given (hurst, grid, dim, seed).
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError("hurst must lie in (0,1)")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not grid.is_uniform():
        raise GridError("uniform grid required for spectral sampling")
    n = grid.n
    dt = (grid.t1 - grid.t0) / n
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(dim):
        try:
            fgn = _fgn_davies_harte(n, hurst, rng)
        except ValueError:
            log.info("circulant embedding failed (H=%g, n=%d); Cholesky fallback", hurst, n)
            fgn = _fgn_cholesky(n, hurst, rng)
        comps.append(fgn)
    incs = np.stack(comps, axis=1) * dt**hurst
    vals = np.vstack([np.zeros((1, dim)), np.cumsum(incs, axis=0)])
    return SampledPath(grid, vals)


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.outer(a, b)


@dataclass
class RoughLift:
    """Path plus per-segment Lévy areas; full areas via Chen composition.

    `seg` has shape (n, m, m) with seg[i] = X[i, i+1].  The cumulative
    prefix X[0, j] is built lazily (thread-safe) so that any X[i, j] is a
    constant-time combination.
    """

    path: SampledPath
    seg: np.ndarray
    hurst_hint: float | None = None
    _prefix: np.ndarray | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        seg = np.asarray(self.seg, dtype=np.float64)
        m = self.path.dim
        if seg.shape != (self.path.grid.n, m, m):
            raise GridError("segment areas must have shape (n, m, m)")
        self.seg = seg

    @property
    def grid(self) -> TimeGrid:
        return self.path.grid

    @property
    def dim(self) -> int:
        return self.path.dim

    def prefix(self) -> np.ndarray:
        """X[0, j] for every j, via cumulative Chen composition."""
        if self._prefix is None:
            with self._lock:
                if self._prefix is None:
                    vals = self.path.values
                    inc = np.diff(vals, axis=0)
                    # term for step j: X[j, j+1] + inc_j (x) x[0, j]
                    cross = np.einsum("ij,ik->ijk", inc, vals[:-1] - vals[0])
                    terms = self.seg + cross
                    pref = np.zeros((vals.shape[0],) + self.seg.shape[1:])
                    np.cumsum(terms, axis=0, out=pref[1:])
                    self._prefix = pref
        return self._prefix

    def levy(self, i: int, j: int) -> np.ndarray:
        """X[i, j] for grid indices i <= j."""
        if j < i:
            raise GridError("levy requires i <= j")
        if j == i:
            return np.zeros((self.dim, self.dim))
        pref = self.prefix()
        vals = self.path.values
        x0i = vals[i] - vals[0]
        return pref[j] - pref[i] - _outer(vals[j] - vals[i], x0i)

    def _partial(self, i: int, u: float, v: float) -> tuple[np.ndarray, np.ndarray]:
        """Increment and area of the sub-piece [u, v] of segment i.

        The linear part contributes 0.5 d (x) d; any antisymmetric /
        bracket excess of the stored segment area is spread
        proportionally to length.
        """
        pts = self.grid.points
        dt_full = pts[i + 1] - pts[i]
        dfull = self.path.values[i + 1] - self.path.values[i]
        frac = (v - u) / dt_full
        d = dfull * frac
        excess = self.seg[i] - 0.5 * _outer(dfull, dfull)
        return d, 0.5 * _outer(d, d) + frac * excess

    def _locate(self, t: float) -> tuple[int, bool]:
        """(segment index containing t, whether t sits on a grid point)."""
        pts = self.grid.points
        tol = 1e-9 * (pts[-1] - pts[0])
        i = int(np.searchsorted(pts, t, side="right")) - 1
        i = min(max(i, 0), self.grid.n - 1)
        if abs(pts[i] - t) <= tol:
            return i, True
        if abs(pts[i + 1] - t) <= tol:
            return i + 1, True
        return i, False

    def levy_at(self, s: float, t: float) -> np.ndarray:
        """X[s, t] for arbitrary times, via piecewise-linear interpolation."""
        if t < s:
            raise GridError("levy_at requires s <= t")
        pts = self.grid.points
        m = self.dim
        s = min(max(s, pts[0]), pts[-1])
        t = min(max(t, pts[0]), pts[-1])
        i0, s_on = self._locate(s)
        i1, t_on = self._locate(t)
        if s_on and t_on:
            return self.levy(i0, min(i1, self.grid.n))
        if not s_on and not t_on and i0 == i1:
            return self._partial(i0, s, t)[1]

        x_acc = np.zeros(m)
        X_acc = np.zeros((m, m))

        def append(d, A):
            nonlocal x_acc, X_acc
            X_acc = X_acc + A + _outer(d, x_acc)
            x_acc = x_acc + d

        start_idx = i0
        if not s_on:
            d, A = self._partial(i0, s, pts[i0 + 1])
            append(d, A)
            start_idx = i0 + 1
        body_end = i1 if not t_on else i1
        if body_end > start_idx:
            append(
                self.path.values[body_end] - self.path.values[start_idx],
                self.levy(start_idx, body_end),
            )
        if not t_on:
            d, A = self._partial(i1, pts[i1], t)
            append(d, A)
        return X_acc


def lift_piecewise_linear(path: SampledPath, hurst_hint: float | None = None) -> RoughLift:
    """Canonical geometric lift: X[i,i+1] = 0.5 x[i,i+1] (x) x[i,i+1]."""
    inc = np.diff(path.values, axis=0)
    seg = 0.5 * np.einsum("ij,ik->ijk", inc, inc)
    return RoughLift(path, seg, hurst_hint=hurst_hint)


def chen_defect(lift: RoughLift, i: int, k: int, j: int) -> np.ndarray:
    """X[i,j] - X[i,k] - X[k,j] - x[k,j] (x) x[i,k]; zero for a valid lift."""
    if not i <= k <= j:
        raise GridError("chen_defect requires i <= k <= j")
    vals = lift.path.values
    cross = _outer(vals[j] - vals[k], vals[k] - vals[i])
    return lift.levy(i, j) - lift.levy(i, k) - lift.levy(k, j) - cross


@dataclass(frozen=True)
class BracketPath:
    """[x]_{t0, t_i} per grid point; increments are additive."""

    grid: TimeGrid
    values: np.ndarray  # (n+1, m, m)

    def increment(self, s: float, t: float) -> np.ndarray:
        return self.value_at(t) - self.value_at(s)

    def value_at(self, t: float) -> np.ndarray:
        pts = self.grid.points
        if t <= pts[0]:
            return self.values[0].copy()
        if t >= pts[-1]:
            return self.values[-1].copy()
        i = int(np.searchsorted(pts, t, side="right")) - 1
        w = (t - pts[i]) / (pts[i + 1] - pts[i])
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


def bracket(lift: RoughLift) -> BracketPath:
    """[x]_{s,t} = x_{s,t} (x) x_{s,t} - 2 Sym(X_{s,t}), anchored at grid start.

    The bracket is additive in (s, t), so the per-point values determine
    every increment.  Identically zero for geometric lifts.
    """
    vals = lift.path.values - lift.path.values[0]
    pref = lift.prefix()
    outer = np.einsum("ij,ik->ijk", vals, vals)
    sym = pref + np.swapaxes(pref, 1, 2)
    return BracketPath(lift.grid, outer - sym)
