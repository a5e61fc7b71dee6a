import json

import pytest

from roughstab.cli import EXIT_BLOWUP, EXIT_CONFIG, EXIT_OK, main


def run(*argv):
    return main([str(a) for a in argv])


def dir_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


class TestSample:
    def test_writes_path_and_manifest(self, tmp_path):
        out = tmp_path / "a"
        assert run("sample", "--seed", 1, "--n", 64, "--hurst", 0.7, "--out", out) == EXIT_OK
        assert (out / "path.csv").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "sample"
        assert man["master_seed"] == 1
        assert "path.csv" in man["outputs"]

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("sample", "--seed", 5, "--n", 128, "--hurst", 0.4, "--out", out) == EXIT_OK
        assert dir_bytes(a) == dir_bytes(b)

    def test_bad_hurst(self, tmp_path):
        assert run("sample", "--seed", 1, "--hurst", 1.5, "--out", tmp_path / "x") == EXIT_CONFIG

    def test_seed_required(self, tmp_path):
        assert run("sample", "--out", tmp_path / "x") == EXIT_CONFIG


class TestLift:
    def test_chen_report(self, tmp_path):
        out = tmp_path / "lift"
        assert run("lift", "--seed", 2, "--n", 128, "--hurst", 0.4, "--dim", 2, "--out", out) == EXIT_OK
        chen = json.loads((out / "chen.json").read_text())
        assert chen["passed"]
        assert chen["worst_defect"] <= 1e-12
        assert (out / "levy.csv").exists()


class TestNorms:
    def test_report_fields(self, tmp_path):
        out = tmp_path / "norms"
        assert run("norms", "--seed", 3, "--n", 128, "--hurst", 0.4, "--rough",
                   "--p", 2.9, "--alpha", 0.35, "--out", out) == EXIT_OK
        rep = json.loads((out / "norms.json").read_text())
        assert rep["p_variation"] > 0.0
        assert rep["rough_seminorm"] > 0.0
        assert rep["control_check"]["passed"]


class TestGreedy:
    def test_times_and_bounds(self, tmp_path):
        out = tmp_path / "greedy"
        assert run("greedy", "--seed", 4, "--n", 256, "--hurst", 0.4,
                   "--gamma", 0.5, "--alpha", 0.35, "--nu", 0.38, "--out", out) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["passed"]
        assert (out / "times.csv").read_text().startswith("tau\n")

    def test_bad_gamma(self, tmp_path):
        assert run("greedy", "--seed", 4, "--gamma", 2.0, "--alpha", 0.35,
                   "--nu", 0.38, "--out", tmp_path / "x") == EXIT_CONFIG


class TestSolve:
    def write_system(self, tmp_path, A, C=0.1, f=None):
        cfg = tmp_path / "system.json"
        cfg.write_text(json.dumps({"A": A, "C": C, "f": f}))
        return cfg

    def test_young_solve(self, tmp_path):
        cfg = self.write_system(tmp_path, [[-1.0]])
        out = tmp_path / "solve"
        assert run("solve", "--seed", 5, "--n", 256, "--hurst", 0.7, "--config", cfg,
                   "--scheme", "milstein", "--p", 1.45, "--out", out) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["passed"]

    def test_rough_solve(self, tmp_path):
        cfg = self.write_system(tmp_path, [[-1.0]], C=0.2)
        out = tmp_path / "solver"
        assert run("solve", "--seed", 6, "--n", 256, "--hurst", 0.4, "--config", cfg,
                   "--mode", "rough", "--alpha", 0.35, "--out", out) == EXIT_OK
        assert (out / "trajectory.csv").exists()

    def test_blowup_exit_code(self, tmp_path):
        cfg = self.write_system(tmp_path, [[40.0]], C=0.0)
        out = tmp_path / "blow"
        assert run("solve", "--seed", 7, "--n", 100, "--t", 10.0, "--hurst", 0.7,
                   "--config", cfg, "--out", out) == EXIT_BLOWUP
        rep = json.loads((out / "report.json").read_text())
        assert rep["blow_up"]

    def test_missing_config(self, tmp_path):
        assert run("solve", "--seed", 1, "--config", tmp_path / "nope.json",
                   "--out", tmp_path / "x") == EXIT_CONFIG


class TestStability:
    def config(self, tmp_path):
        cfg = tmp_path / "stab.json"
        cfg.write_text(json.dumps({
            "system": {"A": [[-1.0]], "C": 0.05, "f": None},
            "driver": {"H": 0.7, "T": 2.0, "n": 256},
            "seeds": {"master": 9, "count": 4},
            "mode": "young",
            "p": 1.45,
            "mc_samples": 100,
        }))
        return cfg

    def test_outputs(self, tmp_path):
        out = tmp_path / "stab"
        assert run("stability", "--config", self.config(tmp_path), "--out", out) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["classification"] in (
            "globally-exp-stable-evidence",
            "locally-exp-stable-evidence",
            "unstable-evidence",
            "inconclusive",
        )
        assert (out / "exponents.csv").read_text().startswith("rank,exponent\n")
        assert (out / "thresholds.csv").read_text().startswith("criterion,bound,satisfied\n")

    def test_rerun_byte_identical(self, tmp_path):
        cfg = self.config(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("stability", "--config", cfg, "--out", out) == EXIT_OK
        assert dir_bytes(a) == dir_bytes(b)

    def test_bad_mode(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"mode": "bogus"}))
        assert run("stability", "--config", cfg, "--out", tmp_path / "x") == EXIT_CONFIG


class TestVerify:
    @pytest.mark.parametrize("suite", ["chen", "control", "greedy"])
    def test_suites_pass(self, tmp_path, suite):
        out = tmp_path / suite
        assert run("verify", "--suite", suite, "--seed", 11, "--out", out) == EXIT_OK
        rep = json.loads((out / "verify.json").read_text())
        assert rep["passed"], rep

    def test_unknown_suite(self, tmp_path):
        assert run("verify", "--suite", "nope", "--seed", 1, "--out", tmp_path / "x") == EXIT_CONFIG
