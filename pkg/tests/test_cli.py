import json
import math
import subprocess
import sys

import pytest

from rdsim.cli import ConfigError, main, parse_config

TWO_PI = 2.0 * math.pi


def run_cli(args):
    return main(list(args))


class TestParseConfig:
    def test_defaults_match_study_parameters(self, tmp_path):
        path = tmp_path / "empty.json"
        path.write_text("{}")
        cfg = parse_config(str(path), "run-sm", {})
        assert cfg.length == pytest.approx(TWO_PI)
        assert cfg.resolved_grid_points() == 2**9
        assert cfg.dt == 1e-3
        assert cfg.diffusivities == (1.0, 0.5, 0.1)
        assert cfg.kappa1 == 1.0 and cfg.kappa2 == 0.05

    def test_2d_default_grid(self):
        cfg = parse_config(None, "run-sm", {"dimension": 2})
        assert cfg.resolved_grid_points() == 2**8

    def test_negative_dt_rejected(self):
        with pytest.raises(ConfigError, match="dt must be positive"):
            parse_config(None, "run-sm", {"dt": -1.0})

    def test_epsilon_guard_for_convergence(self):
        h = TWO_PI / 2**9
        with pytest.raises(ConfigError, match="below 4h guard"):
            parse_config(None, "converge", {"epsilons": (8 * h, 2 * h)})

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"not_a_key": 3}')
        with pytest.raises(ConfigError, match="not_a_key"):
            parse_config(str(path), "run-sm", {})

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"dt": 1e-3,\n  oops}')
        with pytest.raises(ConfigError, match="line 2"):
            parse_config(str(path), "run-sm", {})

    def test_manifest_contains_every_default(self):
        cfg = parse_config(None, "converge", {"epsilons": (0.5, 0.25)})
        manifest = cfg.manifest("converge")
        for key in ("dt", "t_final", "kappa1", "kappa2", "length",
                    "grid_points", "save_interval", "seed", "gamma"):
            assert key in manifest


class TestEquilibriumCommand:
    def test_prints_reference_value(self, capsys):
        code = run_cli(["equilibrium", "--a0", "1", "--b0", "1",
                        "--c0", "0", "--kd", "0.05"])
        assert code == 0
        assert capsys.readouterr().out.strip() == "0.8"

    def test_negative_input_is_usage_error(self, capsys):
        code = run_cli(["equilibrium", "--a0", "-1", "--b0", "1",
                        "--c0", "0", "--kd", "0.05"])
        assert code == 2


class TestUsageErrors:
    def test_unknown_subcommand_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rdsim.cli", "frobnicate"],
            capture_output=True, text=True)
        assert proc.returncode == 2
        assert "usage" in (proc.stderr + proc.stdout).lower()

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"dt": -5}')
        code = run_cli(["run-sm", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2


class TestRunCommands:
    def test_run_sm_artifacts(self, tmp_path, capsys):
        out = tmp_path / "sm"
        code = run_cli(["run-sm", "--out", str(out), "--grid-points", "64",
                        "--t-final", "0.05"])
        assert code == 0
        for name in ("masses.csv", "fields.csv", "run-manifest.json",
                     "masses.png", "fields.png"):
            assert (out / name).exists(), name
        header = (out / "masses.csv").read_text().splitlines()[0]
        assert header == "time,model,species,mass,stderr"
        manifest = json.loads((out / "run-manifest.json").read_text())
        assert manifest["command"] == "run-sm"
        assert manifest["grid_points"] == 64

    def test_field_csv_schema_1d(self, tmp_path):
        out = tmp_path / "mfm"
        code = run_cli(["run-mfm", "--out", str(out), "--grid-points", "64",
                        "--t-final", "0.02", "--eps", "0.6", "--no-figures"])
        assert code == 0
        lines = (out / "fields.csv").read_text().splitlines()
        assert lines[0] == "time,species,index_1,index_2,value"
        # index_2 stays blank in one dimension
        assert lines[1].split(",")[3] == ""

    def test_run_pbsrd_writes_stderr_column(self, tmp_path):
        out = tmp_path / "pb"
        code = run_cli(["run-pbsrd", "--out", str(out), "--grid-points", "32",
                        "--t-final", "0.1", "--save-interval", "0.05",
                        "--gamma", "50", "--n-runs", "3", "--eps", "0.7",
                        "--threads", "1", "--seed", "4", "--no-figures"])
        assert code == 0
        rows = (out / "masses.csv").read_text().splitlines()
        assert rows[1].split(",")[1] == "pbsrd"
        assert rows[1].split(",")[4] != ""

    def test_converge_artifacts_and_stdout(self, tmp_path, capsys):
        out = tmp_path / "cv"
        h = TWO_PI / 64
        code = run_cli(["converge", "--out", str(out), "--grid-points", "64",
                        "--t-final", "0.05", "--kernel", "doi",
                        "--epsilons", str(16 * h), str(8 * h), str(4 * h)])
        assert code == 0
        text = capsys.readouterr().out
        assert "slope[A]" in text
        conv = (out / "convergence.csv").read_text().splitlines()
        assert conv[0] == "epsilon,err_A,err_B,err_C"
        assert len(conv) == 4
        slopes = (out / "slopes.csv").read_text().splitlines()
        assert slopes[0] == "species,slope"
        assert (out / "convergence.png").exists()

    def test_compare_artifacts(self, tmp_path, capsys):
        out = tmp_path / "cmp"
        code = run_cli(["compare", "--out", str(out), "--grid-points", "32",
                        "--t-final", "0.1", "--save-interval", "0.05",
                        "--gamma", "50", "--n-runs", "2", "--eps", "0.7",
                        "--threads", "1", "--seed", "9"])
        assert code == 0
        assert "C_eq" in capsys.readouterr().out
        for name in ("masses.csv", "fields_sm.csv", "fields_mfm.csv",
                     "fields_pbsrd.csv", "masses.png", "profiles.png",
                     "run-manifest.json"):
            assert (out / name).exists(), name
        models = {line.split(",")[1]
                  for line in (out / "masses.csv").read_text().splitlines()[1:]}
        assert models == {"sm", "mfm", "pbsrd"}

    def test_byte_identical_reruns(self, tmp_path):
        args = ["run-pbsrd", "--grid-points", "32", "--t-final", "0.1",
                "--save-interval", "0.05", "--gamma", "40", "--n-runs", "2",
                "--eps", "0.7", "--threads", "1", "--seed", "11", "--no-figures"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli(args + ["--out", str(out1)]) == 0
        assert run_cli(args + ["--out", str(out2)]) == 0
        for name in ("masses.csv", "fields.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_runtime_failure_removes_partial_outputs(self, tmp_path, monkeypatch):
        out = tmp_path / "fail"
        import rdsim.cli as cli_mod

        def boom(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(cli_mod.ex, "compare_models", boom)
        code = run_cli(["compare", "--out", str(out), "--grid-points", "32",
                        "--t-final", "0.1", "--gamma", "40", "--n-runs", "2",
                        "--eps", "0.7", "--threads", "1"])
        assert code == 1
        assert not any(out.iterdir())
