import numpy as np
import pytest

from roughstab import (
    GridError,
    RoughLift,
    SampledPath,
    TimeGrid,
    bracket,
    chen_defect,
    lift_piecewise_linear,
    sample_fbm,
)
from conftest import fbm_lift


class TestTimeGrid:
    def test_uniform(self):
        g = TimeGrid.uniform(0.0, 2.0, 4)
        assert np.allclose(g.points, [0, 0.5, 1, 1.5, 2])
        assert g.is_uniform()

    def test_refine(self):
        g = TimeGrid.uniform(0.0, 1.0, 4).refine(2)
        assert g.n == 8
        assert g.index_of(0.375) == 3

    def test_index_of_rejects_off_grid(self):
        g = TimeGrid.uniform(0.0, 1.0, 4)
        with pytest.raises(GridError):
            g.index_of(0.3)

    def test_non_increasing_rejected(self):
        with pytest.raises(GridError):
            TimeGrid(np.array([0.0, 1.0, 0.5]))


class TestSampledPath:
    def test_interpolation(self):
        g = TimeGrid.uniform(0.0, 1.0, 2)
        p = SampledPath(g, np.array([[0.0], [1.0], [4.0]]))
        assert p.value_at(0.25)[0] == pytest.approx(0.5)
        assert p.increment(0.25, 0.75)[0] == pytest.approx(2.5 - 0.5)


class TestFbm:
    def test_deterministic(self):
        g = TimeGrid.uniform(0.0, 1.0, 64)
        a = sample_fbm(0.4, g, dim=2, seed=9)
        b = sample_fbm(0.4, g, dim=2, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_starts_at_zero(self):
        g = TimeGrid.uniform(0.0, 1.0, 16)
        assert np.all(sample_fbm(0.7, g, seed=1).values[0] == 0.0)

    @pytest.mark.parametrize("hurst", [0.35, 0.5, 0.75])
    def test_increment_variance_scaling(self, hurst):
        g = TimeGrid.uniform(0.0, 1.0, 64)
        incs = []
        for seed in range(200):
            x = sample_fbm(hurst, g, dim=1, seed=seed)
            incs.append(np.diff(x.values[:, 0]))
        var = np.var(np.concatenate(incs))
        assert var == pytest.approx((1.0 / 64) ** (2 * hurst), rel=0.1)

    def test_self_similarity_of_span(self):
        # doubling the horizon at fixed n scales increments by 2^H
        g1 = TimeGrid.uniform(0.0, 1.0, 128)
        g2 = TimeGrid.uniform(0.0, 2.0, 128)
        s1 = np.std([np.diff(sample_fbm(0.7, g1, seed=s).values[:, 0]) for s in range(100)])
        s2 = np.std([np.diff(sample_fbm(0.7, g2, seed=s).values[:, 0]) for s in range(100)])
        assert s2 / s1 == pytest.approx(2.0**0.7, rel=0.05)


class TestLift:
    def test_levy_matches_bruteforce(self):
        path, lift = fbm_lift(0.4, 32, dim=2, seed=3)
        vals = path.values
        for (i, j) in [(0, 32), (5, 20), (11, 12)]:
            acc = np.zeros((2, 2))
            x_acc = np.zeros(2)
            for k in range(i, j):
                d = vals[k + 1] - vals[k]
                acc += lift.seg[k] + np.outer(d, x_acc)
                x_acc += d
            assert np.allclose(lift.levy(i, j), acc, atol=1e-14)

    def test_chen_identity(self):
        _, lift = fbm_lift(0.35, 128, dim=3, seed=4)
        rng = np.random.default_rng(0)
        for _ in range(200):
            i, k, j = np.sort(rng.choice(129, size=3, replace=False))
            assert np.abs(chen_defect(lift, int(i), int(k), int(j))).max() < 1e-13

    def test_geometric_symmetry(self):
        path, lift = fbm_lift(0.5, 64, dim=2, seed=5)
        for (i, j) in [(0, 64), (3, 40)]:
            X = lift.levy(i, j)
            inc = path.values[j] - path.values[i]
            assert np.allclose(X + X.T, np.outer(inc, inc), atol=1e-13)

    def test_levy_at_chen_off_grid(self):
        path, lift = fbm_lift(0.4, 64, dim=2, seed=6)
        s, u, t = 0.1031, 0.517, 0.9004  # all off-grid
        X_su = lift.levy_at(s, u)
        X_ut = lift.levy_at(u, t)
        X_st = lift.levy_at(s, t)
        cross = np.outer(path.value_at(t) - path.value_at(u), path.value_at(u) - path.value_at(s))
        assert np.allclose(X_st, X_su + X_ut + cross, atol=1e-13)

    def test_levy_at_agrees_on_grid(self):
        path, lift = fbm_lift(0.4, 32, dim=2, seed=7)
        pts = path.grid.points
        assert np.allclose(lift.levy_at(pts[4], pts[21]), lift.levy(4, 21), atol=1e-14)

    def test_refinement_consistency(self):
        # lift of the refined piecewise-linear path agrees at shared nodes
        path, lift = fbm_lift(0.4, 16, dim=2, seed=8)
        fine_grid = path.grid.refine(4)
        fine_vals = np.array([path.value_at(t) for t in fine_grid.points])
        fine_lift = lift_piecewise_linear(SampledPath(fine_grid, fine_vals))
        assert np.allclose(fine_lift.levy(0, 64), lift.levy(0, 16), atol=1e-13)
        assert np.allclose(fine_lift.levy(8, 40), lift.levy(2, 10), atol=1e-13)


class TestBracket:
    def test_zero_for_geometric(self):
        _, lift = fbm_lift(0.4, 64, dim=2, seed=9)
        br = bracket(lift)
        assert np.abs(br.values).max() < 1e-13

    def test_synthetic_nongeometric(self):
        # add an Ito-style correction -0.5 dt I to each segment area
        path, lift = fbm_lift(0.5, 32, dim=2, seed=10)
        dt = 1.0 / 32
        seg = lift.seg - 0.5 * dt * np.eye(2)
        lift2 = RoughLift(path, seg, hurst_hint=0.5)
        br = bracket(lift2)
        # bracket [x]_{0,t} = x (x) x - 2 Sym(X) accumulates +dt I per step
        assert np.allclose(br.values[-1], np.eye(2), atol=1e-12)
        # additivity: increments sum
        mid = br.values[16]
        assert np.allclose(br.values[-1] - mid, mid, atol=1e-12)

    def test_chen_still_holds_nongeometric(self):
        path, lift = fbm_lift(0.5, 32, dim=2, seed=11)
        seg = lift.seg - 0.5 * (1.0 / 32) * np.eye(2)
        lift2 = RoughLift(path, seg, hurst_hint=0.5)
        assert np.abs(chen_defect(lift2, 2, 17, 30)).max() < 1e-13
