"""Command-line interface: dispatch, overrides, outputs, and exit codes."""
import json

import pytest

from skboot import cli

from test_config import BASE_CONFIG, write_config

MM1_CONFIG = """
seed = 3
out_dir = "out"

[[process]]
label = "arrival"
family = "gamma"
shape = 1.0
scale = 0.25
m = 50

[[process]]
label = "service"
family = "gamma"
shape = 1.0
scale = 0.2
m = 50

[topology]
stations = 1
arrival_station = 1
arrival_process = "arrival"
service_processes = ["service"]

[uq]
B = 50
k = 8
N = 16
"""


def run_cli(args):
    return cli.main(args)


class TestExitCodes:
    def test_missing_config(self, capsys):
        assert run_cli(["--config", "/nonexistent.toml", "oracle"]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        path = write_config(tmp_path, BASE_CONFIG + "\nbogus = 1\n")
        assert run_cli(["--config", str(path), "uq"]) == cli.EXIT_CONFIG

    def test_degenerate_data_starvation(self, tmp_path):
        # constant observations: every gamma resample is degenerate
        files = {}
        text = MM1_CONFIG
        for label, content in (
            ("arrival", "0.25\n" * 5),
            ("service", "0.2\n0.21\n0.19\n0.2\n0.2\n"),
        ):
            f = tmp_path / f"{label}.txt"
            f.write_text(content)
            text = text.replace(
                f'label = "{label}"', f'label = "{label}"\ndata_file = "{f}"'
            )
        path = write_config(tmp_path, text)
        code = run_cli(
            ["--config", str(path), "--out-dir", str(tmp_path / "out"), "uq"]
        )
        assert code == cli.EXIT_STARVATION


class TestDryRun:
    def test_validates_without_work(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert run_cli(["--config", str(path), "--dry-run", "uq"]) == 0
        assert "config OK" in capsys.readouterr().out


class TestOracle:
    def test_mm1_prints_expected_number(self, tmp_path, capsys):
        path = write_config(tmp_path, MM1_CONFIG)
        assert run_cli(["--config", str(path), "oracle"]) == 0
        out = capsys.readouterr().out
        assert "expected number in system: 4" in out
        assert "0.8" in out

    def test_unstable_verdict(self, tmp_path, capsys):
        path = write_config(tmp_path, MM1_CONFIG.replace("scale = 0.2\n", "scale = 0.3\n"))
        assert run_cli(["--config", str(path), "oracle"]) == 0
        assert "UNSTABLE" in capsys.readouterr().out


class TestUQCommand:
    def test_outputs_and_seed_reproducibility(self, tmp_path, capsys):
        path = write_config(tmp_path, MM1_CONFIG)
        outputs = []
        for tag in ("a", "b"):
            code = run_cli(
                [
                    "--config",
                    str(path),
                    "--seed",
                    "11",
                    "--out-dir",
                    str(tmp_path / "out"),
                    "--tag",
                    tag,
                    "uq",
                ]
            )
            assert code == 0
            outputs.append((tmp_path / "out" / f"uq_{tag}.json").read_text())
        assert outputs[0] == outputs[1]
        record = json.loads(outputs[0])
        assert record["ci0_lo"] <= record["ci0_hi"]
        assert (tmp_path / "out" / "uq_a_detail.csv").exists()
        assert "CI0" in capsys.readouterr().out


class TestDesignDump:
    def test_writes_design_csv(self, tmp_path, capsys):
        path = write_config(tmp_path, MM1_CONFIG)
        code = run_cli(
            ["--config", str(path), "--out-dir", str(tmp_path / "out"), "design-dump"]
        )
        assert code == 0
        lines = (tmp_path / "out" / "design_run.csv").read_text().strip().splitlines()
        assert lines[0] == "x1,x2,x3,x4,n"
        assert len(lines) == 9  # k=8 points


class TestPresets:
    def test_desk_preset(self, tmp_path):
        from skboot.config import load_config

        args = cli.build_parser().parse_args(
            ["--config", str(write_config(tmp_path)), "--preset", "desk", "coverage"]
        )
        cfg = cli._apply_overrides(load_config(args.config), args)
        assert cfg.uq.B == 500
        assert cfg.grid.R <= 200
        assert cfg.sensitivity_R <= 100

    def test_paper_preset(self, tmp_path):
        from skboot.config import load_config

        args = cli.build_parser().parse_args(
            ["--config", str(write_config(tmp_path)), "--preset", "paper", "coverage"]
        )
        cfg = cli._apply_overrides(load_config(args.config), args)
        assert cfg.uq.B == 2000
        assert cfg.grid.R == 1000
        assert cfg.sensitivity_R == 1000


class TestHarnessCommands:
    def test_pu_command(self, tmp_path, capsys):
        text = BASE_CONFIG.replace("m = [100]", "m = [5000]")
        path = write_config(tmp_path, text)
        code = run_cli(
            ["--config", str(path), "--out-dir", str(tmp_path / "out"), "pu"]
        )
        assert code == 0
        assert (tmp_path / "out" / "pu_run.csv").exists()
        assert "mean P_U" in capsys.readouterr().out

    def test_coverage_command(self, tmp_path, capsys):
        path = write_config(tmp_path)
        code = run_cli(
            ["--config", str(path), "--out-dir", str(tmp_path / "out"), "coverage"]
        )
        assert code == 0
        assert (tmp_path / "out" / "coverage_run.csv").exists()
        assert (tmp_path / "out" / "scatter_run.csv").exists()
        assert "CI0" in capsys.readouterr().out
