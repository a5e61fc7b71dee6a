"""Stability functionals, angular/log-norm dynamics, Lyapunov estimation,
and Monte-Carlo verification of exponential-stability thresholds.

The central objects are the increasing functionals (F, kappa1, kappa2,
kappa, kappa_rough) that control the pathwise growth of log ||y_t|| on
unit time blocks, and the criteria that compare the drift's spectral gap
lambda_A against noise-moment expectations of those functionals.

Almost-sure statements are tested as high-probability statements over
finite seed sets; every report states the pass fraction explicitly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .norms import p_variation, rough_seminorm, young_loeve_constant
from .paths import RoughLift, SampledPath, TimeGrid, bracket, lift_piecewise_linear, sample_fbm
from .rough import RoughLinearSystem, solve_linear_rde
from .young import BlowupError, YoungSystem, default_h, solve_yde

log = logging.getLogger(__name__)

_EXP_CLAMP = 700.0  # largest exponent fed to np.exp
_HUGE = 1e300


def _safe_exp(z: float) -> float:
    return float(np.exp(min(float(z), _EXP_CLAMP)))


@dataclass(frozen=True)
class SpectralData:
    """Spectral gap of the drift matrix: <y, Ay> <= -lambda_A ||y||^2."""

    lambda_A: float
    A_norm: float


def lambda_A(A: np.ndarray) -> SpectralData:
    """Largest lambda with <y, Ay> <= -lambda ||y||^2, i.e. the smallest
    eigenvalue of -Sym(A).  Errors unless A is negative definite."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    sym = 0.5 * (A + A.T)
    eigs = np.linalg.eigvalsh(sym)
    if eigs.max() >= 0.0:
        raise ValueError(f"A not negative definite (symmetric-part eigenvalue {eigs.max():.6g})")
    return SpectralData(lambda_A=float(-eigs.max()), A_norm=float(np.linalg.norm(A, 2)))


@dataclass
class GammaAccumulator:
    """Running sum of per-unit-block kappa1 values; its time average
    converges to E kappa1 by ergodicity, which the stabilized() check probes."""

    values: list = field(default_factory=list)

    def add(self, value: float) -> None:
        self.values.append(float(value))

    @property
    def total(self) -> float:
        return float(sum(self.values))

    @property
    def rate(self) -> float:
        return self.total / len(self.values) if self.values else 0.0

    def partial(self, n: int) -> float:
        """Gamma after n whole blocks."""
        return float(sum(self.values[:n]))

    def stabilized(self, rel_gap: float = 0.10) -> dict:
        """Compare the last-quarter block mean against the full mean."""
        n = len(self.values)
        if n < 8:
            return {"passed": False, "reason": "too few blocks", "blocks": n}
        vals = np.asarray(self.values)
        full = vals.mean()
        tail = vals[3 * n // 4 :].mean()
        gap = abs(tail - full) / max(abs(full), 1e-300)
        return {"passed": bool(gap < rel_gap), "relative_gap": float(gap), "blocks": n, "rate": float(full)}


@dataclass
class StabilityFunctionals:
    """Increasing functionals controlling log ||y_t|| on unit blocks.

    kappa1(z) is the assembled polynomial P evaluated at the driver's
    p-variation z:

        z + 8K(||A|| + C_f) z + 8K C_g z^2 + (8K C_g)^p z^{p+1}
          + 0.5 (0.5 K z + 4 K^2 C_g z^2)^2 e^{2 F(z)},

    kappa2(z) = z^2 / 2, H(z) = h(z), and F is the growth function of
    the a-priori bound on unit intervals.  kappa(u, v) governs the
    squared-norm Gronwall recursion, and kappa_rough is the polynomial
    functional of (t - a, [[x]]_alpha, [[X]]_2alpha, [[bracket]]_2alpha)
    used for the rough linear case.
    """

    lam_A: float
    A_norm: float
    C_f: float
    C_g: float
    p: float
    h: Callable[[float], float] | None = None
    interval_length: float = 1.0
    # rough-mode constants (unused in the Young branch)
    alpha: float | None = None
    nu: float | None = None
    C_alpha: float = 2.0
    gamma: GammaAccumulator = field(default_factory=GammaAccumulator)

    def __post_init__(self):
        # the Young-Loeve constant only exists for the Young pairing
        # (p < 2); the rough branch never uses it
        self.K = young_loeve_constant(self.p, self.p) if self.p < 2.0 else math.nan
        if self.h is None:
            self.h = lambda r: self.C_f

    @classmethod
    def from_young_system(cls, sys: YoungSystem, p: float) -> "StabilityFunctionals":
        spec = lambda_A(sys.A)
        return cls(lam_A=spec.lambda_A, A_norm=spec.A_norm, C_f=sys.C_f, C_g=sys.C_g, p=p, h=sys.h)

    @classmethod
    def from_rough_system(cls, sys: RoughLinearSystem, p: float, alpha: float, nu: float) -> "StabilityFunctionals":
        spec = lambda_A(sys.A)
        return cls(
            lam_A=spec.lambda_A,
            A_norm=spec.A_norm,
            C_f=sys.C_f,
            C_g=sys.C_norm,
            p=p,
            h=sys.h,
            alpha=alpha,
            nu=nu,
            C_alpha=sys.C_alpha,
        )

    # ---- Young-case functionals -------------------------------------

    def F(self, z: float) -> float:
        """Growth exponent of the a-priori bound on an interval of the
        configured length: sup ||y|| <= ||y_a|| (1 + e^F)."""
        coef = 4.0**self.p * math.log(2.0) * max(self.A_norm + self.C_f, (self.K + 1.0) * self.C_g)
        return coef * (self.interval_length**self.p + float(z) ** self.p)

    def kappa1(self, z: float) -> float:
        z = float(z)
        K, p, Cg = self.K, self.p, self.C_g
        poly = z + 8.0 * K * (self.A_norm + self.C_f) * z + 8.0 * K * Cg * z**2 + (8.0 * K * Cg) ** p * z ** (p + 1.0)
        cauchy = 0.5 * (0.5 * K * z + 4.0 * K**2 * Cg * z**2) ** 2 * _safe_exp(2.0 * self.F(z))
        return min(poly + cauchy, _HUGE)

    def kappa2(self, z: float) -> float:
        return 0.5 * float(z) ** 2

    def H(self, z: float) -> float:
        return float(self.h(float(z)))

    def kappa(self, u: float, v: float) -> float:
        """Squared-norm recursion functional with lambda = lambda_A - C_f:
        (e^{2 lam u} - 1)(1 + e^{F(v)})^2 + 2 e^{2 lam u}(1 + e^{F(v)}) e^{F(v)}."""
        lam = self.lam_A - self.C_f
        eF = _safe_exp(self.F(v))
        e2 = _safe_exp(2.0 * lam * u)
        return min((e2 - 1.0) * (1.0 + eF) ** 2 + 2.0 * e2 * (1.0 + eF) * eF, _HUGE)

    def gronwall_coefficient(self, xp_block: float) -> float:
        """Per-unit-block coefficient 2 C_g z [kappa(1, z) + 1] of the
        squared-norm recursion."""
        z = float(xp_block)
        return min(2.0 * self.C_g * z * (self.kappa(1.0, z) + 1.0), _HUGE)

    # ---- Rough-case functional --------------------------------------

    def _rough_constants(self) -> tuple[float, float, float, float]:
        if self.alpha is None or self.nu is None:
            raise ValueError("rough functionals need alpha and nu")
        Cn = self.C_g
        cg1 = 2.0 * Cn  # sup/derivative bound for the projected field C th - <th, C th> th
        cf1 = 2.0 * (self.A_norm + self.C_f)
        ck1 = 3.0 * Cn**2
        M = max(cf1, cg1**2 * (1.0 + self.C_alpha), ck1 * (1.0 + self.C_alpha), cg1 * (self.C_alpha + 1.0), 0.5)
        return Cn, cg1, self.C_alpha, M

    def _theta_seminorm_bound(self, x: float, X: float, br: float) -> float:
        """Bound for max{T, T^2, T^4} with T the controlled seminorm of
        the angular pair: M^{4/(nu-alpha)} [1 + (x + X + br)^{8/(nu-alpha)}]."""
        _, _, _, M = self._rough_constants()
        ex = 1.0 / (self.nu - self.alpha)
        total = x + X + br
        return min(M ** min(4.0 * ex, 600.0) * (1.0 + total ** min(8.0 * ex, 600.0)), _HUGE)

    def kappa_rough(self, u: float, x_alpha: float, X_2alpha: float, br_2alpha: float = 0.0) -> float:
        """Assembled increasing polynomial functional for the rough
        linear case; vanishes at u = 0 and multiplies ||C|| once in the
        log-norm estimate."""
        Cn, cg1, Ca, _ = self._rough_constants()
        a = self.alpha
        u = float(u)
        if u <= 0.0:
            return 0.0
        x, X, B = float(x_alpha), float(X_2alpha), float(br_2alpha)
        T = self._theta_seminorm_bound(x, X, B)
        ua, u2a, u3a = u**a, u ** (2 * a), u ** (3 * a)
        # bracket (Young-type) contribution
        t1 = Cn * u2a * B * (1.5 + 5.0 * Ca * cg1 * ua * x)
        t2 = 5.0 * Ca * Cn * u * (0.5 * B**2 * (x + 1.0) ** 2 + 0.5 * T)
        # rough-integral contribution
        t3 = ua * x + 4.0 * Cn * u2a * X
        t4 = Ca * Cn * u3a * (4.0 * Cn * x**3 + 14.0 * cg1 * X * x)
        t5 = Ca * u3a * (
            x**2 * (1.0 + 2.0 * Cn * ua * x) ** 2
            + T
            + u2a * (0.5 * x**2 + 0.5 * T)
            + 7.0 * Cn * u ** (2.0 * (self.nu - a)) * ((x + 1.0) ** 2 * X**2 + T)
        )
        return min(t1 + t2 + t3 + t4 + t5, _HUGE)

    def spot_check_monotone(self, zmax: float = 5.0, n: int = 64) -> dict:
        """Verify kappa1(0) = kappa2(0) = 0 and monotonicity on a grid."""
        zs = np.linspace(0.0, zmax, n)
        k1 = np.array([self.kappa1(z) for z in zs])
        k2 = np.array([self.kappa2(z) for z in zs])
        hs = np.array([self.H(z) for z in zs])
        ok = (
            abs(k1[0]) < 1e-14
            and abs(k2[0]) < 1e-14
            and np.all(np.diff(k1) >= -1e-12)
            and np.all(np.diff(k2) >= -1e-12)
            and np.all(np.diff(hs) >= -1e-12)
        )
        return {"passed": bool(ok), "kappa1_at_0": float(k1[0]), "kappa2_at_0": float(k2[0])}


# ---------------------------------------------------------------------
# Angular / log-norm decomposition
# ---------------------------------------------------------------------


def _angular_linear_step(theta, rho, A, C, fdir, dt, dx, X, dbr):
    """One second-order step of the coupled (theta, rho) system for
    linear noise g(y) = C y.  X weights the iterated-integral correction
    with the derivative index on the first axis; dbr is the bracket
    increment (zero for geometric drivers)."""
    Ctheta = np.einsum("jab,b->ja", C, theta)  # rows C_j theta
    a = Ctheta @ theta  # a_j = <theta, C_j theta>
    g1 = Ctheta - np.outer(a, theta)  # projected noise field
    aA = float(theta @ (A @ theta))
    af = float(theta @ fdir)
    drift_th = A @ theta - aA * theta + fdir - af * theta

    d_th = drift_th * dt + np.einsum("ja,j->a", g1, dx)
    d_rho = (aA + af) * dt + float(a @ dx)

    if X is not None:
        Cv = np.einsum("jab,kb->jka", C, g1)  # C_j g1_k
        q = np.einsum("ka,ja->jk", g1, Ctheta) + np.einsum("jka,a->jk", Cv, theta)
        D = Cv - q[..., None] * theta[None, None, :] - a[:, None, None] * g1[None, :, :]
        d_th = d_th + np.einsum("jk,jka->a", X, D)
        d_rho = d_rho + float(np.einsum("jk,jk->", X, q))

    if dbr is not None:
        CC = Ctheta @ Ctheta.T  # <C_j theta, C_k theta>
        d_rho = d_rho + float(np.einsum("jk,jk->", dbr, 0.5 * CC - np.outer(a, a)))
        term = (
            3.0 * np.einsum("j,k,a->jka", a, a, theta)
            - np.einsum("j,ka->jka", a, Ctheta)
            - np.einsum("k,ja->jka", a, Ctheta)
            - CC[..., None] * theta[None, None, :]
        )
        d_th = d_th + 0.5 * np.einsum("jk,jka->a", dbr, term)

    return theta + d_th, rho + d_rho


def angular_log_decomposition(sys, driver, y0: np.ndarray, interval=None) -> dict:
    """Integrate the sphere/log-norm split of the system alongside the
    direct solve and report their agreement.

    theta follows the projected dynamics on the unit sphere and rho the
    scalar log-norm equation, so exp(rho) theta reconstructs the
    solution.  Linear noise uses a second-order step (with iterated
    integrals from the lift, or (1/2) dx (x) dx for a plain driver);
    general Young systems use a first-order step.  Bracket terms enter
    the rough branch and vanish for geometric drivers.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    r0 = float(np.linalg.norm(y0))
    if r0 == 0.0:
        raise ValueError("y0 must be nonzero")

    rough = isinstance(driver, RoughLift)
    linear = isinstance(sys, RoughLinearSystem)
    path = driver.path if rough else driver
    grid = path.grid
    i0 = 0 if interval is None else grid.index_of(interval[0])
    i1 = grid.n if interval is None else grid.index_of(interval[1])
    pts = grid.points[i0 : i1 + 1]
    n = pts.size - 1

    if rough and not linear:
        raise ValueError("rough angular decomposition needs linear noise")
    dbr_all = None
    if rough:
        br = bracket(driver)
        if np.abs(br.values).max() > 1e-12:
            dbr_all = np.diff(br.values[i0 : i1 + 1], axis=0)

    A = np.atleast_2d(np.asarray(sys.A, dtype=np.float64))
    d = A.shape[0]
    theta = y0 / r0
    rho = math.log(r0)
    thetas = np.empty((n + 1, d))
    rhos = np.empty(n + 1)
    thetas[0], rhos[0] = theta, rho
    dxs = np.diff(path.values[i0 : i1 + 1], axis=0)

    if linear:
        C = sys.C
        for i in range(n):
            dt = pts[i + 1] - pts[i]
            dx = dxs[i]
            X = driver.seg[i0 + i] if rough else 0.5 * np.outer(dx, dx)
            dbr = dbr_all[i] if dbr_all is not None else None
            y = _safe_exp(rho) * theta
            fdir = sys.drift_nonlinearity(y) / max(_safe_exp(rho), 1e-300) if sys.f is not None else np.zeros(d)
            theta, rho = _angular_linear_step(theta, rho, A, C, fdir, dt, dx, X, dbr)
            if rho < -650.0 or not np.isfinite(rho):
                raise BlowupError(i + 1, f"log-norm underflow at step {i + 1}")
            thetas[i + 1], rhos[i + 1] = theta, rho
    else:
        for i in range(n):
            dt = pts[i + 1] - pts[i]
            dx = dxs[i]
            r = _safe_exp(rho)
            y = r * theta
            fdir = sys.drift_nonlinearity(y) / r
            G = sys.diffusion(y) / r  # (d, m)
            aA = float(theta @ (A @ theta))
            af = float(theta @ fdir)
            aG = theta @ G  # (m,)
            theta = theta + (A @ theta - aA * theta + fdir - af * theta) * dt + (G - np.outer(theta, aG)) @ dx
            rho = rho + (aA + af) * dt + float(aG @ dx)
            if rho < -650.0 or not np.isfinite(rho):
                raise BlowupError(i + 1, f"log-norm underflow at step {i + 1}")
            thetas[i + 1], rhos[i + 1] = theta, rho

    sub = TimeGrid(pts)
    theta_path = SampledPath(sub, thetas)
    lognorm_path = SampledPath(sub, rhos[:, None])

    # direct solve on the same grid/scheme order for the consistency report
    if rough:
        direct = solve_linear_rde(sys, driver, y0, stepping="grid")["trajectory"]
        dvals = direct.values[i0 : i1 + 1]
    elif linear:
        ysys = sys.as_young()
        dvals = solve_yde(ysys, SampledPath(sub, path.values[i0 : i1 + 1]), y0, scheme="milstein").values
    else:
        dvals = solve_yde(sys, SampledPath(sub, path.values[i0 : i1 + 1]), y0, scheme="euler").values

    dnorm = np.linalg.norm(dvals, axis=1)
    recon = np.exp(np.clip(rhos, -_EXP_CLAMP, _EXP_CLAMP))[:, None] * thetas
    scale = max(float(dnorm.max()), 1e-300)
    ok = dnorm > 0
    consistency = {
        "theta_norm_max_dev": float(np.abs(np.linalg.norm(thetas, axis=1) - 1.0).max()),
        "theta_max_dev": float(np.linalg.norm(thetas[ok] - dvals[ok] / dnorm[ok, None], axis=1).max()),
        "lognorm_max_dev": float(np.abs(rhos[ok] - np.log(dnorm[ok])).max()),
        "reconstruction_rel_dev": float(np.linalg.norm(recon - dvals, axis=1).max() / scale),
        "scheme_order": 2 if linear else 1,
    }
    return {"theta": theta_path, "lognorm": lognorm_path, "consistency": consistency, "direct": SampledPath(sub, dvals)}


# ---------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------


def lyapunov_exponent(trajectory: SampledPath, burn_in_fraction: float = 0.5) -> float:
    """Least-squares slope of log ||y_t|| versus t after burn-in."""
    return lyapunov_estimates(trajectory, burn_in_fraction)["regression"]


def lyapunov_estimates(trajectory: SampledPath, burn_in_fraction: float = 0.5) -> dict:
    """Regression and endpoint estimates of the exponential decay rate."""
    norms = np.linalg.norm(trajectory.values, axis=1)
    if np.any(norms <= 0.0):
        raise ValueError(f"zero-norm point at index {int(np.argmin(norms))}")
    t = trajectory.grid.points
    logn = np.log(norms)
    start = int(burn_in_fraction * (t.size - 1))
    start = min(max(start, 0), t.size - 2)
    slope = float(np.polyfit(t[start:], logn[start:], 1)[0])
    endpoint = float((logn[-1] - logn[0]) / (t[-1] - t[0]))
    return {"regression": slope, "endpoint": endpoint}


# ---------------------------------------------------------------------
# Monte-Carlo expectations
# ---------------------------------------------------------------------

_FUNCTIONALS = ("pvar_power", "pvar_times_kappa", "kappa1", "F_exp")


def mc_expectation(
    functional,
    H: float,
    p: float,
    n_samples: int,
    seed: int,
    funcs: StabilityFunctionals | None = None,
    n_grid: int = 512,
) -> dict:
    """Sample mean and standard error of a functional of the driver's
    p-variation over fresh unit-interval paths; deterministic given seed.

    Built-ins: pvar_power -> z^{p+1}; pvar_times_kappa -> z (kappa(1,z)+1);
    kappa1 -> kappa1(z); F_exp -> e^{F(z)}.  A callable receives z directly.
    """
    if n_samples < 100:
        raise ValueError("need n_samples >= 100")
    if isinstance(functional, str):
        if functional not in _FUNCTIONALS:
            raise ValueError(f"unknown functional {functional!r}")
        if functional != "pvar_power" and funcs is None:
            raise ValueError(f"functional {functional!r} needs a StabilityFunctionals instance")
        fn = {
            "pvar_power": lambda z: z ** (p + 1.0),
            "pvar_times_kappa": lambda z: z * (funcs.kappa(1.0, z) + 1.0),
            "kappa1": lambda z: funcs.kappa1(z),
            "F_exp": lambda z: _safe_exp(funcs.F(z)),
        }[functional]
    else:
        fn = functional
    grid = TimeGrid.uniform(0.0, 1.0, n_grid)
    seeds = np.random.SeedSequence(seed).generate_state(n_samples)
    vals = np.empty(n_samples)
    for i in range(n_samples):
        x = sample_fbm(H, grid, dim=1, seed=int(seeds[i]))
        vals[i] = fn(p_variation(x, p))
    return {
        "estimate": float(vals.mean()),
        "std_error": float(vals.std(ddof=1) / math.sqrt(n_samples)),
        "n_samples": int(n_samples),
    }


def _noise_norm(C: np.ndarray) -> float:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim == 0:
        return abs(float(C))
    if C.ndim == 2:
        return float(np.linalg.norm(C, 2))
    return float(np.sqrt(sum(np.linalg.norm(Cj, 2) ** 2 for Cj in C)))


# ---------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------


def criterion_linear_young(
    A: np.ndarray, C: np.ndarray, p: float, H: float, mc_seed: int, n_samples: int = 1000, n_grid: int = 512
) -> dict:
    """Explicit threshold for the linear system dy = Ay dt + Cy dx:

        lambda_A > (1 + 4K||A|| + 8K + (8K)^p) ||C|| (E z^{p+1})^{1/(p+1)},

    with K = K(p, p) and z the driver's unit-interval p-variation.
    `satisfied` uses the moment estimate plus two standard errors."""
    if not H > 0.5:
        raise ValueError("Young criterion needs H > 1/2")
    if not (1.0 < p < 2.0 and p * H >= 1.0):
        raise ValueError("need 1 < p < 2 with p*H >= 1")
    spec = lambda_A(A)
    K = young_loeve_constant(p, p)
    Cn = _noise_norm(C)
    mom = mc_expectation("pvar_power", H, p, n_samples, mc_seed, n_grid=n_grid)
    coef = 1.0 + 4.0 * K * spec.A_norm + 8.0 * K + (8.0 * K) ** p
    rhs = coef * Cn * mom["estimate"] ** (1.0 / (p + 1.0))
    rhs_conservative = coef * Cn * (mom["estimate"] + 2.0 * mom["std_error"]) ** (1.0 / (p + 1.0))
    return {
        "lhs": spec.lambda_A,
        "rhs": float(rhs),
        "rhs_conservative": float(rhs_conservative),
        "satisfied": bool(spec.lambda_A > rhs_conservative),
        "K": float(K),
        "C_norm": Cn,
        "moment": mom,
    }


def local_radius(
    funcs: StabilityFunctionals, block_pvars: np.ndarray, epsilon: float, delta: float | None = None
) -> dict:
    """Sufficient local-stability radius r(x) built from per-unit-block
    p-variation values of one realization.

    delta defaults to the largest value (by bisection) with
    C_g kappa2(delta) + H(delta e^{C_g kappa2(delta)}) < H(0) + epsilon.
    """
    H0 = funcs.H(0.0)
    drop = funcs.lam_A - H0 - epsilon
    if drop <= 0.0:
        return {"radius": 0.0, "reason": "epsilon too large for the spectral gap"}
    if delta is None:
        def margin(dl):
            return funcs.C_g * funcs.kappa2(dl) + funcs.H(dl * _safe_exp(funcs.C_g * funcs.kappa2(dl))) - H0 - epsilon

        lo, hi = 0.0, 1.0
        while margin(hi) < 0.0 and hi < 1e6:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if margin(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        delta = lo if lo > 0.0 else 1e-6
    block_pvars = np.asarray(block_pvars, dtype=np.float64)
    gammas = np.cumsum([0.0] + [funcs.C_g * funcs.kappa1(z) for z in block_pvars])
    n_blocks = block_pvars.size
    m = None  # first index from which Gamma(k) < drop * k persists
    for k in range(n_blocks + 1):
        if np.all(gammas[k:] < drop * np.arange(k, n_blocks + 1) + 1e-300):
            m = k
            break
    if m is None:
        return {
            "radius": 0.0,
            "delta": float(delta),
            "m": n_blocks,
            "drop_rate": float(drop),
            "reason": "accumulated Gamma never falls below the drop line",
        }
    shrink = 1.0
    for j in range(m):
        shrink /= 1.0 + _safe_exp(funcs.F(block_pvars[j]))
    r = delta * _safe_exp(gammas[m] - drop * m) * shrink
    return {"radius": float(r), "delta": float(delta), "m": int(m), "drop_rate": float(drop)}


def criterion_general(
    sys,
    H: float,
    mode: str,
    mc_seed: int,
    p: float | None = None,
    alpha: float | None = None,
    nu: float | None = None,
    n_samples: int = 500,
    n_grid: int = 512,
) -> dict:
    """Threshold report for the general small-noise stability theorems.

    young:        needs H > 1/2; epsilon bounds from E kappa1 of the
                  unit-interval p-variation, with the local threshold
                  (lambda_A - h(0)) / (1 + E kappa1) and the global one
                  (lambda_A - C_f) / E kappa1; predicted decay rate
                  lambda = lambda_A - C_f - C_g E kappa1.
    rough_linear: needs 1/3 < H < 1/2 and linear noise; uses the
                  expectation of kappa_rough over unit-interval lifts.
    """
    if mode not in ("young", "rough_linear"):
        raise ValueError(f"unknown mode {mode!r}")
    report: dict = {"mode": mode, "hypotheses": {}}
    if mode == "young":
        if p is None:
            p = 1.0 / H + 0.05
        funcs = (
            StabilityFunctionals.from_rough_system(sys, p, alpha or 0.0, nu or 1.0)
            if isinstance(sys, RoughLinearSystem)
            else StabilityFunctionals.from_young_system(sys, p)
        )
        report["hypotheses"]["H_gt_half"] = H > 0.5
        report["hypotheses"]["lambda_gt_h0"] = funcs.lam_A > funcs.H(0.0)
        report["hypotheses"]["lambda_gt_Cf"] = funcs.lam_A > funcs.C_f
        mom = mc_expectation("kappa1", H, p, n_samples, mc_seed, funcs=funcs, n_grid=n_grid)
        Ek1 = mom["estimate"]
        report["E_kappa1"] = mom
        report["epsilon_local"] = max((funcs.lam_A - funcs.H(0.0)) / (1.0 + Ek1), 0.0)
        report["epsilon_global"] = max((funcs.lam_A - funcs.C_f) / max(Ek1, 1e-300), 0.0)
        report["predicted_lambda"] = funcs.lam_A - funcs.C_f - funcs.C_g * Ek1
        report["noise_level"] = funcs.C_g
        report["satisfied_local"] = bool(
            report["hypotheses"]["lambda_gt_h0"] and funcs.C_g < report["epsilon_local"]
        )
        report["satisfied_global"] = bool(
            report["hypotheses"]["lambda_gt_Cf"] and funcs.C_g < report["epsilon_global"]
        )
        return report
    # rough_linear
    if not isinstance(sys, RoughLinearSystem):
        raise ValueError("rough_linear mode needs linear noise")
    if not 1.0 / 3.0 < H < 0.5:
        raise ValueError("rough_linear mode needs 1/3 < H < 1/2")
    alpha = alpha if alpha is not None else max(H - 0.05, 1.0 / 3.0 + 0.01)
    nu = nu if nu is not None else H
    if p is None:
        p = 1.0 / alpha + 0.05
    funcs = StabilityFunctionals.from_rough_system(sys, p, alpha, nu)
    report["hypotheses"]["lambda_gt_h0"] = funcs.lam_A > funcs.H(0.0)
    report["hypotheses"]["lambda_gt_Cf"] = funcs.lam_A > funcs.C_f
    grid = TimeGrid.uniform(0.0, 1.0, n_grid)
    seeds = np.random.SeedSequence(mc_seed).generate_state(n_samples)
    vals = np.empty(n_samples)
    for i in range(n_samples):
        x = sample_fbm(H, grid, dim=sys.C.shape[0], seed=int(seeds[i]))
        lift = lift_piecewise_linear(x)
        vals[i] = funcs.kappa_rough(1.0, *_lift_seminorms(lift, alpha))
    Ekr = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    report["E_kappa_rough"] = {"estimate": Ekr, "std_error": se, "n_samples": n_samples}
    report["predicted_lambda"] = funcs.lam_A - funcs.C_f - sys.C_norm * Ekr
    report["noise_level"] = sys.C_norm
    report["epsilon_global"] = max((funcs.lam_A - funcs.C_f) / max(Ekr, 1e-300), 0.0)
    report["satisfied_global"] = bool(
        report["hypotheses"]["lambda_gt_Cf"] and sys.C_norm < report["epsilon_global"]
    )
    report["satisfied_local"] = report["satisfied_global"]
    return report


def _lift_seminorms(lift: RoughLift, alpha: float) -> tuple[float, float]:
    from .norms import max_holder_ratio, max_levy_ratio

    hol = max_holder_ratio(lift.path.values, lift.grid.points, alpha)
    lev = math.sqrt(max_levy_ratio(lift, alpha, 0, lift.grid.n))
    return hol, lev


# ---------------------------------------------------------------------
# Discrete Gronwall
# ---------------------------------------------------------------------


def discrete_gronwall(values, coefficients) -> np.ndarray:
    """Bound sequence b_n = values[0] * prod_{k<n} (1 + c_k)."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if np.any(coefficients < 0.0):
        raise ValueError("negative coefficient")
    values = np.asarray(values, dtype=np.float64)
    bounds = np.empty(coefficients.size + 1)
    bounds[0] = values[0]
    np.cumprod(np.minimum(1.0 + coefficients, _HUGE), out=bounds[1:])
    bounds[1:] *= values[0]
    return np.minimum(bounds, _HUGE)


def check_gronwall(funcs: StabilityFunctionals, trajectory: SampledPath, x: SampledPath) -> dict:
    """Check that e^{2 lam n} ||y_n||^2 at whole times respects the
    Gronwall bound built from per-unit-block p-variations of the driver."""
    lam = funcs.lam_A - funcs.C_f
    T = trajectory.grid.t1 - trajectory.grid.t0
    n_blocks = int(math.floor(T + 1e-9))
    if n_blocks < 1:
        raise ValueError("need at least one unit block")
    t0 = trajectory.grid.t0
    seq = np.empty(n_blocks + 1)
    coefs = np.empty(n_blocks)
    for k in range(n_blocks + 1):
        yk = trajectory.value_at(t0 + k)
        seq[k] = _safe_exp(2.0 * lam * k) * float(yk @ yk)
        if k < n_blocks:
            coefs[k] = funcs.gronwall_coefficient(p_variation(x, funcs.p, t0 + k, t0 + k + 1))
    bounds = discrete_gronwall(seq, coefs)
    margins = bounds - seq
    return {
        "passed": bool(np.all(margins >= -1e-9 * np.maximum(bounds, 1.0))),
        "worst_margin": float(margins.min()),
        "sequence": seq,
        "bounds": bounds,
        "coefficients": coefs,
    }


# ---------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------


@dataclass
class StabilityReport:
    measured_exponent: float
    classification: str
    thresholds: dict
    per_seed_exponents: np.ndarray
    fraction_negative: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "measured_exponent": self.measured_exponent,
            "classification": self.classification,
            "thresholds": self.thresholds,
            "per_seed_exponents": [float(v) for v in self.per_seed_exponents],
            "fraction_negative": self.fraction_negative,
            "details": self.details,
        }


def _build_system(spec: dict, mode: str):
    A = np.atleast_2d(np.asarray(spec["A"], dtype=np.float64))
    d = A.shape[0]
    C = np.asarray(spec["C"], dtype=np.float64)
    if C.ndim == 0:
        C = float(C) * np.eye(d)[None]
    elif C.ndim == 2:
        C = C[None]
    fspec = spec.get("f")
    if fspec:
        c0, c1 = float(fspec.get("c0", 0.0)), float(fspec.get("c1", 0.0))
        h = default_h(c0, c1)

        def f(y):
            r = np.linalg.norm(y)
            return c1 * y * r / (1.0 + r)

        C_f = c0 + c1
    else:
        f, h, C_f = None, None, 0.0
    if mode == "rough_linear":
        return RoughLinearSystem(A=A, C=C, f=f, C_f=C_f, h=h)
    Cn = _noise_norm(C)
    Cs = C

    def g(y):
        return np.einsum("jab,b->aj", Cs, y)

    def dg(y):
        return np.transpose(Cs, (1, 0, 2))

    return YoungSystem(A=A, f=f, g=g, C_f=C_f, C_g=Cn, h=h, dg=dg, m=C.shape[0])


def run_stability_experiment(config: dict) -> StabilityReport:
    """Per-seed solve -> Lyapunov exponent -> aggregate, cross-referenced
    with the matching threshold criterion.

    Config: {system: {A, C, f: {c0, c1} | null}, driver: {H, T, n},
    seeds: {master, count}, mode: young | rough_linear, alpha, p,
    scheme?, y0?, magnitudes?, criterion?}.
    """
    mode = config.get("mode", "young")
    if mode not in ("young", "rough_linear"):
        raise ValueError(f"unknown mode {mode!r}")
    drv = config["driver"]
    H, T, n = float(drv["H"]), float(drv["T"]), int(drv["n"])
    seeds_cfg = config["seeds"]
    master, count = int(seeds_cfg["master"]), int(seeds_cfg["count"])
    sys_obj = _build_system(config["system"], mode)
    m = sys_obj.C.shape[0] if mode == "rough_linear" else sys_obj.m
    d = sys_obj.A.shape[0]
    y0 = np.asarray(config.get("y0", np.ones(d) / math.sqrt(d)), dtype=np.float64)
    magnitudes = [float(v) for v in config.get("magnitudes", [1.0])]
    scheme = config.get("scheme", "milstein" if mode == "young" else "davie")
    grid = TimeGrid.uniform(0.0, T, n)
    child_seeds = np.random.SeedSequence(master).generate_state(count)

    exponents = np.empty(count)
    mag_ok = np.ones(count, dtype=bool)
    blowups = 0
    for i in range(count):
        x = sample_fbm(H, grid, dim=m, seed=int(child_seeds[i]))
        per_mag = []
        for mag in magnitudes:
            try:
                if mode == "rough_linear":
                    lift = lift_piecewise_linear(x)
                    traj = solve_linear_rde(sys_obj, lift, mag * y0, stepping="grid")["trajectory"]
                else:
                    traj = solve_yde(sys_obj, x, mag * y0, scheme=scheme)
                per_mag.append(lyapunov_exponent(traj))
            except BlowupError:
                per_mag.append(np.inf)
                blowups += 1
        exponents[i] = per_mag[0]
        mag_ok[i] = all(v < 0.0 for v in per_mag)

    order = np.argsort(exponents)
    exponents_sorted = exponents[order]
    finite = exponents_sorted[np.isfinite(exponents_sorted)]
    measured = float(np.median(finite)) if finite.size else math.inf
    frac_neg = float(np.mean(exponents < 0.0))

    thresholds: dict = {}
    if config.get("criterion", True):
        p = config.get("p", (1.0 / H + 0.05) if H > 0.5 else (1.0 / config.get("alpha", H - 0.02) + 0.05))
        try:
            crit = criterion_general(
                sys_obj,
                H,
                "young" if mode == "young" else "rough_linear",
                mc_seed=master + 1,
                p=float(p),
                alpha=config.get("alpha"),
                n_samples=int(config.get("mc_samples", 200)),
                n_grid=min(n, 512),
            )
            thresholds["general"] = {
                "bound": crit.get("epsilon_global", 0.0),
                "satisfied": bool(crit.get("satisfied_global", False)),
                "report": crit,
            }
        except ValueError as exc:
            thresholds["general"] = {"bound": None, "satisfied": False, "error": str(exc)}

    all_mag_decay = bool(np.mean(mag_ok) >= 0.95)
    if frac_neg >= 0.95 and all_mag_decay:
        classification = "globally-exp-stable-evidence"
    elif frac_neg >= 0.95:
        classification = "locally-exp-stable-evidence"
    elif frac_neg <= 0.5:
        classification = "unstable-evidence"
    else:
        classification = "inconclusive"

    return StabilityReport(
        measured_exponent=measured,
        classification=classification,
        thresholds=thresholds,
        per_seed_exponents=exponents_sorted,
        fraction_negative=frac_neg,
        details={
            "mode": mode,
            "H": H,
            "T": T,
            "n": n,
            "seeds": {"master": master, "count": count},
            "scheme": scheme,
            "magnitudes": magnitudes,
            "blowups": blowups,
            "magnitude_decay_fraction": float(np.mean(mag_ok)),
        },
    )
