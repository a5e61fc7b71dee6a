import numpy as np
import pytest

from roughstab import (
    BlowupError,
    SampledPath,
    TimeGrid,
    YoungSystem,
    apriori_bound,
    check_apriori,
    default_h,
    sample_fbm,
    solve_yde,
    young_integral,
)


def scalar_linear_system(a=-1.0, c=0.5):
    return YoungSystem(
        A=[[a]],
        f=None,
        g=lambda y: c * y[:, None],
        C_f=0.0,
        C_g=abs(c),
        dg=lambda y: np.array([[[c]]]),
        m=1,
    )


class TestYoungIntegral:
    def test_left_riemann_scalar(self):
        g = TimeGrid.uniform(0.0, 1.0, 4)
        x = SampledPath(g, g.points[:, None])
        y = SampledPath(g, g.points[:, None])
        # left sum of t dt on 4 steps: (0 + .25 + .5 + .75) * .25
        assert young_integral(y, x) == pytest.approx(0.375)

    def test_matrix_integrand(self):
        g = TimeGrid.uniform(0.0, 1.0, 8)
        x = SampledPath(g, np.column_stack([g.points, g.points**2]))
        yv = np.tile(np.eye(2)[None], (9, 1, 1))
        y = SampledPath(g, yv.reshape(9, 4))
        out = young_integral(SampledPath(g, yv.reshape(9, 4).reshape(9, 2, 2)), x)
        assert out.shape == (2,)
        assert np.allclose(out, x.values[-1] - x.values[0])

    def test_misaligned_grids(self):
        g1 = TimeGrid.uniform(0.0, 1.0, 4)
        g2 = TimeGrid.uniform(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            young_integral(SampledPath(g1, np.zeros((5, 1))), SampledPath(g2, np.zeros((6, 1))))


class TestSolver:
    def test_closed_form_milstein(self):
        g = TimeGrid.uniform(0.0, 1.0, 2**12)
        x = sample_fbm(0.7, g, dim=1, seed=3)
        sys = scalar_linear_system()
        traj = solve_yde(sys, x, np.array([1.0]), scheme="milstein")
        exact = np.exp(-g.points + 0.5 * x.values[:, 0])
        rel = np.abs(traj.values[:, 0] - exact).max() / exact.max()
        assert rel < 1e-3

    def test_euler_converges(self):
        sys = scalar_linear_system()
        errs = []
        for n in (2**9, 2**11):
            g = TimeGrid.uniform(0.0, 1.0, n)
            x = sample_fbm(0.7, g, dim=1, seed=4)
            traj = solve_yde(sys, x, np.array([1.0]), scheme="euler")
            exact = np.exp(-g.points + 0.5 * x.values[:, 0])
            errs.append(np.abs(traj.values[:, 0] - exact).max())
        assert errs[1] < errs[0]

    def test_zero_initial_condition(self):
        g = TimeGrid.uniform(0.0, 1.0, 64)
        x = sample_fbm(0.7, g, dim=1, seed=5)
        traj = solve_yde(scalar_linear_system(), x, np.array([0.0]))
        assert np.all(traj.values == 0.0)

    def test_blowup_raises_with_index(self):
        g = TimeGrid.uniform(0.0, 10.0, 100)
        x = SampledPath(g, np.zeros((101, 1)))
        sys = YoungSystem(A=[[40.0]], f=None, g=None)
        with pytest.raises(BlowupError) as exc:
            solve_yde(sys, x, np.array([1.0]))
        assert exc.value.index > 0

    def test_milstein_needs_dg(self):
        g = TimeGrid.uniform(0.0, 1.0, 8)
        x = sample_fbm(0.7, g, dim=1, seed=6)
        sys = YoungSystem(A=[[-1.0]], f=None, g=lambda y: y[:, None], C_g=1.0, m=1)
        with pytest.raises(ValueError):
            solve_yde(sys, x, np.array([1.0]), scheme="milstein")


class TestSystemValidation:
    def test_f_must_vanish_at_zero(self):
        with pytest.raises(ValueError):
            YoungSystem(A=[[-1.0]], f=lambda y: y + 1.0, g=None, C_f=1.0)

    def test_default_h_increasing_bounded(self):
        h = default_h(0.2, 0.5)
        rs = np.linspace(0, 50, 200)
        vals = np.array([h(r) for r in rs])
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] == pytest.approx(0.2)
        assert vals[-1] <= 0.7

    def test_drift_envelope_spot_check(self):
        h = default_h(0.0, 0.5)

        def f(y):
            r = np.linalg.norm(y)
            return 0.5 * y * r / (1.0 + r)

        sys = YoungSystem(A=-np.eye(2), f=f, g=None, C_f=0.5, h=h)
        assert sys.spot_check_drift_envelope() <= 1e-12


class TestAprioriBound:
    def test_bound_holds_on_fbm(self):
        sys = scalar_linear_system(c=0.3)
        for seed in range(5):
            g = TimeGrid.uniform(0.0, 1.0, 512)
            x = sample_fbm(0.7, g, dim=1, seed=seed)
            traj = solve_yde(sys, x, np.array([1.0]), scheme="milstein")
            rep = check_apriori(sys, x, traj, p=1.4)
            assert rep["passed"], rep

    def test_scales_with_initial_condition(self):
        sys = scalar_linear_system()
        g = TimeGrid.uniform(0.0, 1.0, 64)
        x = sample_fbm(0.7, g, dim=1, seed=1)
        b1 = apriori_bound(sys, x, np.array([1.0]), 1.4)
        b2 = apriori_bound(sys, x, np.array([2.0]), 1.4)
        assert b2["sup_bound"] == pytest.approx(2.0 * b1["sup_bound"])
