import json
import math
from importlib import resources
from pathlib import Path

import pytest

from spingas import cli

SCENARIOS = resources.files("spingas") / "scenarios"


def scenario_path(name) -> Path:
    return Path(str(SCENARIOS / name))


def run_cli(args):
    return cli.main([str(a) for a in args])


class TestRates:
    def test_kh3_scenario_summary(self, tmp_path):
        assert run_cli(["rates", "--scenario", scenario_path("kh3_rates.toml"),
                        "--out", tmp_path]) == 0
        doc = json.loads((tmp_path / "summary.json").read_text())
        assert doc["rates"]["J"] == pytest.approx(1000.0, rel=0.05)
        assert doc["rates"]["q"] == pytest.approx(4.1, abs=0.01)

    def test_kind_mismatch_fails(self, tmp_path, capsys):
        rc = run_cli(["twomode", "--scenario", scenario_path("kh3_rates.toml"),
                      "--out", tmp_path])
        assert rc == 2
        assert "does not match" in capsys.readouterr().err


class TestValidation:
    def test_unknown_key_rejected_with_path(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('kind = "rates"\n[physical]\nn_a_per_cm3 = 1e14\nbogus_key = 3\n')
        rc = run_cli(["rates", "--scenario", bad, "--out", tmp_path / "out"])
        assert rc == 2
        err = capsys.readouterr().err
        assert "physical.bogus_key" in err

    def test_set_override(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli(["rates", "--scenario", scenario_path("kh3_rates.toml"),
                        "--out", out, "--set", "physical.p_b=0.85"]) == 0
        doc = json.loads((out / "summary.json").read_text())
        # J scales as sqrt(p_b)
        assert doc["rates"]["J"] == pytest.approx(
            1020.81 * math.sqrt(0.85 / 0.75), rel=1e-3)

    def test_bad_set_value(self, tmp_path, capsys):
        rc = run_cli(["rates", "--scenario", scenario_path("kh3_rates.toml"),
                      "--out", tmp_path, "--set", "physical.p_b=not_a_number"])
        assert rc == 2


class TestTwomodeStorage:
    def test_gamma_zero_storage_keeps_two_quanta(self, tmp_path):
        scenario = tmp_path / "storage.toml"
        base = scenario_path("fig2c.toml").read_text()
        base = base.replace('kind = "coherent"', 'kind = "fock"')
        base = base.replace("excitations = 1000.0", "excitations = 2")
        base = base.replace("gamma_per_s = 17.5", "gamma_per_s = 0.0")
        base = base.replace("p_a = 0.95", "p_a = 1.0").replace("p_b = 0.75", "p_b = 1.0")
        base = base.replace("n_bar_a = 0.05", "n_bar_a = 0.0")
        base = base.replace("k_se_cm3_per_s = 5.5e-20", "k_se_cm3_per_s = 0.0")
        base = base.replace("t_end_s = 4.6e-3", "t_end_s = 3.2e-3")
        base = base.replace("dt_s = 8.0e-6", "dt_s = 2.0e-6")
        scenario.write_text(base)
        out = tmp_path / "out"
        assert run_cli(["twomode", "--scenario", scenario, "--out", out]) == 0
        doc = json.loads((out / "summary.json").read_text())
        # the bundled storage field sits at Delta = 100 J, leaving a
        # residual coherent ripple of order 4 (J/Delta)^2 per quantum
        assert doc["final_p_nb"][2] == pytest.approx(1.0, abs=2e-3)


class TestDeterminism:
    def test_manybody_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["manybody-single", "--scenario", scenario_path("fig3a.toml"),
                "--seed", "5", "--set", "manybody.steps=400"]
        assert run_cli(args + ["--out", out1]) == 0
        assert run_cli(args + ["--out", out2]) == 0
        body1 = (out1 / "trajectory_seed5.csv").read_bytes()
        body2 = (out2 / "trajectory_seed5.csv").read_bytes()
        assert body1 == body2
        assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()

    def test_manybody_seed_changes_output(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        base = ["manybody-single", "--scenario", scenario_path("fig3a.toml"),
                "--set", "manybody.steps=400"]
        assert run_cli(base + ["--seed", "5", "--out", out1]) == 0
        assert run_cli(base + ["--seed", "6", "--out", out2]) == 0
        assert (out1 / "trajectory_seed5.csv").read_bytes() != \
            (out2 / "trajectory_seed6.csv").read_bytes()


class TestKineticsScenario:
    def test_small_run_reports(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli(["kinetics", "--scenario",
                        scenario_path("kinetics_validation.toml"),
                        "--out", out, "--set", "kinetics.n_samples=12"]) == 0
        doc = json.loads((out / "summary.json").read_text())
        rep = doc["report"]
        assert rep["n_collisions"] > 0
        assert rep["p_alkali_theory"] == pytest.approx(0.03, rel=0.01)
        assert (out / "histogram.csv").exists()
