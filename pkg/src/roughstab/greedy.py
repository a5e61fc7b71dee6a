"""Greedy stopping-time sequences driven by the rough-path seminorm.

A greedy step starting at tau advances to the largest admissible time t
with

    phi(tau, t) <= gamma,
    phi = [t - tau]^{1-2a} (augmented only) + ⟦x⟧_{a,[tau,t]} + ⟦X⟧_{2a,[tau,t]}^{1/2}.

Steps snap to grid points from below whenever some grid point past tau
is admissible (conservative: per-step bounds hold as stated).  When even
the first grid step violates the threshold — routine for rough drivers,
where a single-increment Hölder ratio barely shrinks under refinement —
the step is placed inside the segment on the piecewise-linear
interpolation, at (a lower bound for) the exact crossing time.  Either
way every produced step satisfies the threshold and every one-grid-point
extension violates it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .norms import max_holder_ratio, max_levy_ratio, holder_seminorm
from .paths import RoughLift

_MAX_STEPS = 2_000_000


class GreedyError(RuntimeError):
    pass


@dataclass(frozen=True)
class GreedySequence:
    gamma: float
    alpha: float
    times: np.ndarray
    augmented: bool
    interval: tuple[float, float] = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        if self.interval is None:
            object.__setattr__(self, "interval", (float(times[0]), float(times[-1])))
        if not np.all(np.diff(times) > 0):
            raise GreedyError("greedy times must be strictly increasing")

    @property
    def count(self) -> int:
        """Number of greedy steps covering the interval."""
        return self.times.size - 1


def _window_phi(lift: RoughLift, alpha: float, tau: float, t: float, augmented: bool) -> float:
    """phi(tau, t) on the point set {tau} U (grid points in (tau,t)) U {t}."""
    pts = lift.grid.points
    tol = 1e-12 * (pts[-1] - pts[0])
    lo = int(np.searchsorted(pts, tau + tol))
    hi = int(np.searchsorted(pts, t - tol))
    times = np.concatenate([[tau], pts[lo:hi], [t]])
    k = times.size
    if k == 2 and t - tau <= tol:
        return 0.0
    vals = np.empty((k, lift.dim))
    vals[0] = lift.path.value_at(tau)
    vals[1 : k - 1] = lift.path.values[lo:hi]
    vals[-1] = lift.path.value_at(t)

    hol = max_holder_ratio(vals, times, alpha)

    # consecutive-piece areas, then a cumulative Chen table
    areas = np.empty((k - 1, lift.dim, lift.dim))
    if k > 2:
        areas[0] = lift.levy_at(tau, pts[lo])
        if k > 3:
            areas[1 : k - 2] = lift.seg[lo : hi - 1]
        areas[-1] = lift.levy_at(pts[hi - 1], t)
    else:
        areas[0] = lift.levy_at(tau, t)
    inc = np.diff(vals, axis=0)
    xcum = vals - vals[0]
    cross = np.einsum("ij,ik->ijk", inc, xcum[:-1])
    Xc = np.zeros((k, lift.dim, lift.dim))
    np.cumsum(areas + cross, axis=0, out=Xc[1:])

    best = 0.0
    for a in range(k - 1):
        X = Xc[a + 1 :] - Xc[a]
        X = X - np.einsum("bp,q->bpq", vals[a + 1 :] - vals[a], xcum[a])
        dt = times[a + 1 :] - times[a]
        ratio = np.sqrt((X**2).sum(axis=(1, 2))) / dt ** (2.0 * alpha)
        m = ratio.max(initial=0.0)
        if m > best:
            best = m
    phi = hol + np.sqrt(best)
    if augmented:
        phi += (t - tau) ** (1.0 - 2.0 * alpha)
    return float(phi)


def _segment_is_geometric(lift: RoughLift, i: int) -> bool:
    d = lift.path.values[i + 1] - lift.path.values[i]
    excess = lift.seg[i] - 0.5 * np.outer(d, d)
    scale = max(1.0, float(np.abs(lift.seg[i]).max()))
    return bool(np.abs(excess).max() <= 1e-13 * scale)


def _geometric_root(c: float, gamma: float, alpha: float, augmented: bool, w_max: float) -> float:
    """Largest w <= w_max with phi(w) = c w^{1-a} [+ w^{1-2a}] <= gamma."""

    def phi(w):
        v = c * w ** (1.0 - alpha)
        if augmented:
            v += w ** (1.0 - 2.0 * alpha)
        return v

    if phi(w_max) <= gamma:
        return w_max
    if not augmented:
        return (gamma / c) ** (1.0 / (1.0 - alpha)) if c > 0 else w_max
    lo_w, hi_w = 0.0, w_max
    for _ in range(80):
        mid = 0.5 * (lo_w + hi_w)
        if phi(mid) <= gamma:
            lo_w = mid
        else:
            hi_w = mid
    return lo_w


def _in_segment_root(
    lift: RoughLift, alpha: float, tau: float, seg_idx: int, gamma: float, augmented: bool, w_max: float
) -> float:
    """Largest w <= w_max with phi(tau, tau + w) <= gamma, phi restricted to one segment."""
    pts = lift.grid.points
    dfull = lift.path.values[seg_idx + 1] - lift.path.values[seg_idx]
    rate = float(np.linalg.norm(dfull)) / (pts[seg_idx + 1] - pts[seg_idx])
    if _segment_is_geometric(lift, seg_idx):
        # phi(w) = rate (1 + 2^{-1/2}) w^{1-a} [+ w^{1-2a}], strictly increasing in w
        return _geometric_root(rate * (1.0 + 2.0**-0.5), gamma, alpha, augmented, w_max)
    # non-geometric segment: numeric bisection on the two-point functional
    def phi2(w):
        return _window_phi(lift, alpha, tau, tau + w, augmented)

    if phi2(w_max) <= gamma:
        return w_max
    lo_w, hi_w = 0.0, w_max
    for _ in range(70):
        mid = 0.5 * (lo_w + hi_w)
        if phi2(mid) <= gamma:
            lo_w = mid
        else:
            hi_w = mid
    return lo_w


def _greedy_step(lift: RoughLift, alpha: float, gamma: float, tau: float, t_end: float, augmented: bool) -> float:
    pts = lift.grid.points
    span = pts[-1] - pts[0]
    tol = 1e-12 * span
    i0 = int(np.searchsorted(pts, tau + tol)) - 1
    i0 = min(max(i0, 0), lift.grid.n - 1)
    seg_end = min(float(pts[i0 + 1]), t_end)
    if _window_phi(lift, alpha, tau, seg_end, augmented) > gamma:
        w = _in_segment_root(lift, alpha, tau, i0, gamma, augmented, seg_end - tau)
        if w <= tol:
            raise GreedyError("grid too coarse for threshold")
        return tau + w
    if seg_end >= t_end - tol:
        return t_end
    # exponential-then-binary search over grid indices for the largest
    # admissible grid point; monotone because point sets nest.
    j_hi_cap = int(np.searchsorted(pts, t_end + tol)) - 1
    lo = i0 + 1  # pts[lo] admissible (checked above, seg_end == pts[i0+1])
    step = 1
    hi = None
    while True:
        cand = min(lo + step, j_hi_cap)
        tc = min(float(pts[cand]), t_end)
        if _window_phi(lift, alpha, tau, tc, augmented) <= gamma:
            lo = cand
            if cand == j_hi_cap:
                if t_end - pts[j_hi_cap] > tol and _window_phi(lift, alpha, tau, t_end, augmented) <= gamma:
                    return t_end
                return min(float(pts[lo]), t_end)
            step *= 2
        else:
            hi = cand
            break
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _window_phi(lift, alpha, tau, float(pts[mid]), augmented) <= gamma:
            lo = mid
        else:
            hi = mid
    return float(pts[lo])


def _build(lift: RoughLift, gamma: float, alpha: float, interval, augmented: bool) -> GreedySequence:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0,1)")
    if augmented and alpha >= 0.5:
        raise ValueError("augmented greedy needs alpha < 1/2")
    pts = lift.grid.points
    if interval is None:
        interval = (float(pts[0]), float(pts[-1]))
    a, b = float(interval[0]), float(interval[1])
    if not (pts[0] - 1e-9 <= a < b <= pts[-1] + 1e-9):
        raise ValueError("interval must lie inside the lift's grid span")
    span = pts[-1] - pts[0]
    tol = 1e-12 * span
    times = [a]
    tau = a
    while tau < b - tol:
        # Fast path: inside a geometric segment the in-segment step width
        # is constant, so a run of sub-grid steps is emitted in one batch.
        i0 = min(max(int(np.searchsorted(pts, tau + tol)) - 1, 0), lift.grid.n - 1)
        seg_end = min(float(pts[i0 + 1]), b)
        if seg_end - tau > tol and _segment_is_geometric(lift, i0):
            d = lift.path.values[i0 + 1] - lift.path.values[i0]
            rate = float(np.linalg.norm(d)) / (pts[i0 + 1] - pts[i0])
            c = rate * (1.0 + 2.0**-0.5)
            w = _geometric_root(c, gamma, alpha, augmented, seg_end - tau)
            if w <= tol:
                raise GreedyError("grid too coarse for threshold")
            k = int((seg_end - tau) / w) - 1  # steps that stay strictly inside
            if k > 0:
                if len(times) + k > _MAX_STEPS:
                    raise GreedyError("greedy sequence exceeded step budget")
                times.extend((tau + w * np.arange(1, k + 1)).tolist())
                tau = times[-1]
        tau = _greedy_step(lift, alpha, gamma, tau, b, augmented)
        times.append(tau)
        if len(times) > _MAX_STEPS:
            raise GreedyError("greedy sequence exceeded step budget")
    return GreedySequence(gamma=gamma, alpha=alpha, times=np.array(times), augmented=augmented, interval=(a, b))


def greedy_times(lift: RoughLift, gamma: float, alpha: float, interval=None) -> GreedySequence:
    """Plain greedy sequence for the rough seminorm threshold."""
    return _build(lift, gamma, alpha, interval, augmented=False)


def greedy_times_augmented(lift: RoughLift, gamma: float, alpha: float, interval=None) -> GreedySequence:
    """Greedy sequence for the time-augmented functional."""
    return _build(lift, gamma, alpha, interval, augmented=True)


def verify_count_bounds(seq: GreedySequence, lift: RoughLift, nu: float) -> dict:
    """Evaluate the counting bound relevant to `seq` and report margins.

    Plain:      N <= |I| gamma^{-1/(nu-a)} (⟦x⟧_nu + ⟦X⟧_{2nu}^{1/2})^{1/(nu-a)}
    Augmented:  N_bar <= sum_k N_{gamma/2, J_k} over the uniform cover with
                |J_k| = (gamma/2)^{1/(1-2a)}.
    """
    if nu <= seq.alpha:
        raise ValueError("need nu > alpha")
    a_int, b_int = seq.interval
    length = b_int - a_int
    report = {"augmented": seq.augmented, "count": seq.count}
    if not seq.augmented:
        i, j = 0, lift.grid.n
        hol = max_holder_ratio(lift.path.values, lift.grid.points, nu)
        lev = max_levy_ratio(lift, nu, i, j)
        base = hol + np.sqrt(lev)
        ex = 1.0 / (nu - seq.alpha)
        rhs = length * seq.gamma ** (-ex) * base**ex
        report.update({"bound": float(rhs), "passed": bool(seq.count <= rhs), "margin": float(rhs - seq.count)})
        return report
    sub_len = (seq.gamma / 2.0) ** (1.0 / (1.0 - 2.0 * seq.alpha))
    m = int(np.ceil(length / sub_len))
    total = 0
    for k in range(m):
        s = a_int + k * sub_len
        t = min(a_int + (k + 1) * sub_len, b_int)
        if t - s <= 1e-14 * length:
            continue
        sub = greedy_times(lift, seq.gamma / 2.0, seq.alpha, (s, t))
        total += sub.count
    report.update(
        {
            "bound": int(total),
            "subintervals": m,
            "subinterval_length": float(sub_len),
            "passed": bool(seq.count <= total),
            "margin": int(total - seq.count),
        }
    )
    return report
