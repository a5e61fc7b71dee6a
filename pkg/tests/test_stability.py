import numpy as np
import pytest

from roughstab import (
    GammaAccumulator,
    RoughLinearSystem,
    SampledPath,
    StabilityFunctionals,
    TimeGrid,
    YoungSystem,
    angular_log_decomposition,
    check_gronwall,
    criterion_general,
    criterion_linear_young,
    discrete_gronwall,
    lambda_A,
    local_radius,
    lyapunov_estimates,
    lyapunov_exponent,
    mc_expectation,
    run_stability_experiment,
    sample_fbm,
    solve_yde,
)
from roughstab.stability import _build_system


class TestLambdaA:
    def test_scaled_identity(self):
        spec = lambda_A(-2.0 * np.eye(3))
        assert spec.lambda_A == pytest.approx(2.0)
        assert spec.A_norm == pytest.approx(2.0)

    def test_skew_part_ignored(self):
        # skew-symmetric part contributes nothing to <y, Ay>
        A = np.array([[-1.0, 5.0], [-5.0, -1.0]])
        assert lambda_A(A).lambda_A == pytest.approx(1.0)

    def test_rejects_indefinite_symmetric_part(self):
        # symmetric part has eigenvalues -1 +/- 5
        with pytest.raises(ValueError, match="not negative definite"):
            lambda_A(np.array([[-1.0, 10.0], [0.0, -1.0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            lambda_A(np.zeros((2, 3)))


class TestLyapunov:
    def test_pure_exponential_exact(self):
        g = TimeGrid.uniform(0.0, 10.0, 200)
        traj = SampledPath(g, np.exp(-g.points)[:, None])
        est = lyapunov_estimates(traj)
        assert est["regression"] == pytest.approx(-1.0, abs=1e-10)
        assert est["endpoint"] == pytest.approx(-1.0, abs=1e-10)

    def test_oscillating_prefactor(self):
        g = TimeGrid.uniform(0.0, 50.0, 2000)
        traj = SampledPath(g, (np.exp(-g.points) * (2.0 + np.sin(g.points)))[:, None])
        assert lyapunov_exponent(traj) == pytest.approx(-1.0, abs=0.02)

    def test_zero_norm_rejected(self):
        g = TimeGrid.uniform(0.0, 1.0, 4)
        vals = np.ones((5, 1))
        vals[2] = 0.0
        with pytest.raises(ValueError, match="zero-norm"):
            lyapunov_exponent(SampledPath(g, vals))


class TestFunctionals:
    def funcs(self):
        return StabilityFunctionals(lam_A=1.0, A_norm=1.0, C_f=0.1, C_g=0.2, p=1.4)

    def test_monotone_and_zero_at_zero(self):
        rep = self.funcs().spot_check_monotone()
        assert rep["passed"], rep

    def test_kappa2(self):
        assert self.funcs().kappa2(2.0) == pytest.approx(2.0)

    def test_kappa_monotone_in_both_arguments(self):
        f = self.funcs()
        us = np.linspace(0.0, 2.0, 16)
        ks = [f.kappa(u, 0.5) for u in us]
        assert np.all(np.diff(ks) >= 0.0)
        vs = np.linspace(0.0, 2.0, 16)
        ks = [f.kappa(1.0, v) for v in vs]
        assert np.all(np.diff(ks) >= 0.0)

    def test_rough_functional_needs_exponents(self):
        with pytest.raises(ValueError):
            self.funcs().kappa_rough(1.0, 1.0, 1.0)

    def test_kappa_rough_vanishes_and_grows(self):
        sys = RoughLinearSystem(A=-np.eye(1), C=np.array([[[0.3]]]), f=None)
        f = StabilityFunctionals.from_rough_system(sys, p=3.0, alpha=0.35, nu=0.4)
        assert f.kappa_rough(0.0, 2.0, 1.0, 0.5) == 0.0
        us = np.linspace(0.0, 2.0, 32)
        vals = [f.kappa_rough(u, 1.0, 0.5, 0.1) for u in us]
        assert np.all(np.diff(vals) >= 0.0)


class TestGammaAccumulator:
    def test_stabilizes_on_constant_blocks(self):
        acc = GammaAccumulator()
        for _ in range(16):
            acc.add(0.7)
        rep = acc.stabilized()
        assert rep["passed"]
        assert rep["rate"] == pytest.approx(0.7)
        assert acc.partial(4) == pytest.approx(2.8)

    def test_too_few_blocks(self):
        acc = GammaAccumulator()
        acc.add(1.0)
        assert not acc.stabilized()["passed"]

    def test_drifting_mean_flagged(self):
        acc = GammaAccumulator()
        for k in range(16):
            acc.add(float(k))
        assert not acc.stabilized()["passed"]


class TestMonteCarlo:
    def test_degenerate_functional(self):
        rep = mc_expectation(lambda z: 1.0, 0.7, 1.4, 100, seed=1, n_grid=64)
        assert rep["estimate"] == pytest.approx(1.0)
        assert rep["std_error"] == pytest.approx(0.0)

    def test_deterministic_given_seed(self):
        a = mc_expectation("pvar_power", 0.7, 1.4, 100, seed=2, n_grid=64)
        b = mc_expectation("pvar_power", 0.7, 1.4, 100, seed=2, n_grid=64)
        assert a == b

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            mc_expectation("pvar_power", 0.7, 1.4, 50, seed=1)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            mc_expectation("nope", 0.7, 1.4, 100, seed=1)

    def test_named_functionals_need_funcs(self):
        with pytest.raises(ValueError):
            mc_expectation("kappa1", 0.7, 1.4, 100, seed=1)


class TestLinearYoungCriterion:
    def test_zero_noise_trivially_satisfied(self):
        rep = criterion_linear_young(-np.eye(2), np.zeros((2, 2)), 1.45, 0.7, mc_seed=3, n_samples=100, n_grid=64)
        assert rep["rhs"] == 0.0
        assert rep["satisfied"]

    def test_rhs_homogeneous_in_noise(self):
        C = 0.1 * np.eye(2)
        a = criterion_linear_young(-np.eye(2), C, 1.45, 0.7, mc_seed=3, n_samples=100, n_grid=64)
        b = criterion_linear_young(-np.eye(2), 2.0 * C, 1.45, 0.7, mc_seed=3, n_samples=100, n_grid=64)
        assert b["rhs"] == pytest.approx(2.0 * a["rhs"], rel=1e-12)

    def test_hurst_validation(self):
        with pytest.raises(ValueError):
            criterion_linear_young(-np.eye(1), np.eye(1), 1.4, 0.4, mc_seed=1)

    def test_exponent_validation(self):
        with pytest.raises(ValueError):
            criterion_linear_young(-np.eye(1), np.eye(1), 2.5, 0.7, mc_seed=1)


class TestLocalRadius:
    def funcs(self):
        h = lambda r: 0.05 + 0.1 * r / (1.0 + r)
        return StabilityFunctionals(lam_A=1.0, A_norm=1.0, C_f=0.15, C_g=0.1, p=1.4, h=h)

    def test_quiet_path_gives_delta(self):
        rep = local_radius(self.funcs(), np.zeros(8), epsilon=0.2)
        assert rep["m"] == 0
        assert rep["radius"] == pytest.approx(rep["delta"])
        assert rep["radius"] > 0.0

    def test_epsilon_too_large(self):
        rep = local_radius(self.funcs(), np.zeros(4), epsilon=5.0)
        assert rep["radius"] == 0.0

    def test_wild_block_uncertified(self):
        rep = local_radius(self.funcs(), np.concatenate([[2.0], np.zeros(7)]), epsilon=0.2)
        assert rep["radius"] == 0.0
        assert "reason" in rep

    def test_recoverable_block_shrinks_radius(self):
        funcs = self.funcs()
        quiet = local_radius(funcs, np.zeros(10), epsilon=0.2)
        # pick a first-block p-variation whose Gamma increment sits a few
        # drop-rates above zero, so certification resumes after m >= 1
        zs = np.geomspace(1e-4, 1.0, 400)
        gam = np.array([funcs.C_g * funcs.kappa1(z) for z in zs])
        z = float(zs[np.searchsorted(gam, 1.5)])
        rep = local_radius(funcs, np.concatenate([[z], np.zeros(9)]), epsilon=0.2)
        assert rep["m"] >= 1
        assert 0.0 < rep["radius"] < quiet["radius"]


class TestGeneralCriterion:
    def test_young_report_shape(self):
        sys = _build_system({"A": [[-1.0]], "C": 0.05, "f": {"c0": 0.0, "c1": 0.05}}, "young")
        rep = criterion_general(sys, 0.75, "young", mc_seed=4, p=1.4, n_samples=100, n_grid=64)
        assert rep["hypotheses"]["lambda_gt_h0"]
        assert rep["hypotheses"]["lambda_gt_Cf"]
        assert rep["epsilon_local"] >= 0.0
        assert rep["epsilon_global"] >= 0.0
        assert rep["predicted_lambda"] <= sys_lambda(sys)

    def test_rough_linear_report(self):
        sys = RoughLinearSystem(A=-np.eye(1), C=np.array([[[0.1]]]), f=None)
        rep = criterion_general(sys, 0.4, "rough_linear", mc_seed=5, n_samples=100, n_grid=64)
        assert rep["mode"] == "rough_linear"
        assert rep["E_kappa_rough"]["estimate"] > 0.0
        assert np.isfinite(rep["predicted_lambda"])

    def test_mode_validation(self):
        sys = RoughLinearSystem(A=-np.eye(1), C=np.array([[[0.1]]]), f=None)
        with pytest.raises(ValueError):
            criterion_general(sys, 0.4, "other", mc_seed=1)
        with pytest.raises(ValueError):
            criterion_general(sys, 0.7, "rough_linear", mc_seed=1)


def sys_lambda(sys):
    return lambda_A(sys.A).lambda_A


class TestGronwall:
    def test_zero_coefficients(self):
        out = discrete_gronwall([2.0, 9.0, 9.0], np.zeros(2))
        assert np.allclose(out, 2.0)

    def test_geometric_growth(self):
        out = discrete_gronwall([1.0], np.full(4, 0.5))
        assert np.allclose(out, 1.5 ** np.arange(5))

    def test_negative_coefficient_rejected(self):
        with pytest.raises(ValueError):
            discrete_gronwall([1.0], [-0.1])

    def test_check_on_fbm_trajectory(self):
        g = TimeGrid.uniform(0.0, 4.0, 1024)
        x = sample_fbm(0.7, g, dim=1, seed=6)
        sys = YoungSystem(
            A=[[-1.0]],
            f=None,
            g=lambda y: 0.2 * y[:, None],
            C_g=0.2,
            dg=lambda y: np.array([[[0.2]]]),
            m=1,
        )
        traj = solve_yde(sys, x, np.array([1.0]), scheme="milstein")
        funcs = StabilityFunctionals.from_young_system(sys, p=1.45)
        rep = check_gronwall(funcs, traj, x)
        assert rep["passed"], rep["worst_margin"]
        assert rep["coefficients"].size == 4


class TestAngular:
    def test_scalar_reduces_to_lognorm(self):
        g = TimeGrid.uniform(0.0, 1.0, 1024)
        x = sample_fbm(0.7, g, dim=1, seed=7)
        sys = RoughLinearSystem(A=np.array([[-1.0]]), C=np.array([[[0.4]]]), f=None)
        res = angular_log_decomposition(sys, x, np.array([2.0]))
        # in one dimension the sphere is {+-1}: theta is constant
        assert np.allclose(res["theta"].values, 1.0)
        assert res["lognorm"].values[0, 0] == pytest.approx(np.log(2.0))
        assert res["consistency"]["lognorm_max_dev"] < 1e-3

    def test_zero_driver_slope_in_spectral_band(self):
        g = TimeGrid.uniform(0.0, 1.0, 2048)
        x = SampledPath(g, np.zeros((2049, 2)))
        A = np.array([[-1.0, 0.3], [0.0, -2.0]])
        sys = RoughLinearSystem(A=A, C=np.zeros((2, 2, 2)), f=None)
        res = angular_log_decomposition(sys, x, np.array([1.0, 1.0]))
        spec = lambda_A(A)
        slope = (res["lognorm"].values[-1, 0] - res["lognorm"].values[0, 0]) / 1.0
        assert -spec.A_norm - 1e-6 <= slope <= -spec.lambda_A + 1e-6
        assert res["consistency"]["theta_norm_max_dev"] < 1e-3

    def test_zero_start_rejected(self):
        g = TimeGrid.uniform(0.0, 1.0, 8)
        x = sample_fbm(0.7, g, dim=1, seed=8)
        sys = RoughLinearSystem(A=np.array([[-1.0]]), C=np.array([[[0.1]]]), f=None)
        with pytest.raises(ValueError):
            angular_log_decomposition(sys, x, np.array([0.0]))


class TestExperiment:
    def test_noiseless_recovers_spectral_rate(self):
        config = {
            "system": {"A": [[-2.0]], "C": 0.0, "f": None},
            "driver": {"H": 0.7, "T": 10.0, "n": 2048},
            "seeds": {"master": 1, "count": 4},
            "mode": "young",
            "criterion": False,
        }
        rep = run_stability_experiment(config)
        assert rep.measured_exponent == pytest.approx(-2.0, abs=0.1)
        assert rep.fraction_negative == 1.0
        assert rep.classification == "globally-exp-stable-evidence"

    def test_unstable_classification(self):
        config = {
            "system": {"A": [[0.5]], "C": 0.0, "f": None},
            "driver": {"H": 0.7, "T": 5.0, "n": 512},
            "seeds": {"master": 2, "count": 4},
            "mode": "young",
            "criterion": False,
        }
        rep = run_stability_experiment(config)
        assert rep.classification == "unstable-evidence"
        assert rep.measured_exponent > 0.0

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            run_stability_experiment({"mode": "bogus"})

    def test_report_roundtrip(self):
        config = {
            "system": {"A": [[-1.0]], "C": 0.1, "f": None},
            "driver": {"H": 0.7, "T": 2.0, "n": 256},
            "seeds": {"master": 3, "count": 4},
            "mode": "young",
            "criterion": False,
        }
        rep = run_stability_experiment(config)
        d = rep.to_dict()
        assert d["classification"] == rep.classification
        assert len(d["per_seed_exponents"]) == 4
