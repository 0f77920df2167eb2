"""Command-line behaviour: subcommand round trips, deterministic artifacts,
CSV schemas and exit codes."""

import csv
import json
import os

import pytest

from avsearch.cli import cli_dispatch


@pytest.fixture(scope="module")
def scenario_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("scn")
    code = cli_dispatch([
        "gen", "--difficulty", "easy", "--count", "1", "--seed", "3",
        "--width", "10", "--height", "10", "--rooms", "1", "--candidates", "6",
        "--objects", "3", "--starts", "4", "--min-start-distance", "2",
        "--out", str(out),
    ])
    assert code == 0
    path = out / "easy_003.scn"
    assert path.exists()
    return str(path)


RUN_ARGS = ["--policy", "random", "--seed", "7", "--n-sim", "64", "--particles", "16"]


class TestGen:
    def test_gen_deterministic_files(self, tmp_path):
        args = ["gen", "--difficulty", "easy", "--count", "1", "--seed", "9",
                "--width", "10", "--height", "10", "--rooms", "1",
                "--candidates", "6", "--objects", "3", "--starts", "4",
                "--min-start-distance", "2"]
        assert cli_dispatch(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli_dispatch(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "easy_009.scn").read_bytes()
        b = (tmp_path / "b" / "easy_009.scn").read_bytes()
        assert a == b


class TestRun:
    def test_run_deterministic_stdout(self, scenario_file, capsys):
        assert cli_dispatch(["run", "--scenario", scenario_file] + RUN_ARGS) == 0
        first = capsys.readouterr().out
        assert cli_dispatch(["run", "--scenario", scenario_file] + RUN_ARGS) == 0
        second = capsys.readouterr().out
        assert first == second
        assert "success=" in first

    def test_run_verbose_prints_trace(self, scenario_file, capsys):
        assert cli_dispatch(
            ["run", "--scenario", scenario_file, "-v"] + RUN_ARGS
        ) == 0
        out = capsys.readouterr().out
        assert "step " in out and "pose=" in out

    def test_missing_scenario_is_runtime_error(self, capsys):
        assert cli_dispatch(["run", "--scenario", "/nope.scn"] + RUN_ARGS) == 1


class TestBench:
    def test_bench_writes_csvs(self, scenario_file, tmp_path, capsys):
        code = cli_dispatch([
            "bench", "--scenarios", scenario_file, "--policies", "random",
            "--targets", "1", "--starts", "2", "--seed", "5",
            "--n-sim", "64", "--particles", "16", "--timing",
            "--out", str(tmp_path),
        ])
        assert code == 0
        with open(tmp_path / "episodes.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["scenario", "policy", "target", "start", "seed",
                           "success", "path_length", "exploration_length",
                           "failure_kind"]
        assert len(rows) == 3  # header + 1 target x 2 starts
        with open(tmp_path / "summary.csv") as f:
            srows = list(csv.reader(f))
        assert srows[0] == ["scenario", "policy", "episodes", "sr", "apl",
                            "asppl_mean", "asppl_std"]

    def test_bench_byte_identical_across_runs(self, scenario_file, tmp_path):
        args = ["bench", "--scenarios", scenario_file, "--policies", "random",
                "--targets", "1", "--starts", "2", "--seed", "5",
                "--n-sim", "64", "--particles", "16"]
        assert cli_dispatch(args + ["--out", str(tmp_path / "x")]) == 0
        assert cli_dispatch(args + ["--out", str(tmp_path / "y")]) == 0
        for name in ("episodes.csv", "summary.csv"):
            assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


class TestSweep:
    def test_sweep_schema_and_ratios(self, scenario_file, tmp_path):
        code = cli_dispatch([
            "sweep", "--scenarios", scenario_file, "--axis", "miss",
            "--policies", "random", "--targets", "1", "--starts", "1",
            "--seed", "2", "--n-sim", "64", "--particles", "16",
            "--out", str(tmp_path),
        ])
        assert code == 0
        with open(tmp_path / "sweep_miss.csv") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["axis", "ratio", "policy", "sr", "apl",
                           "asppl_mean", "asppl_std"]
        assert [r[1] for r in rows[1:]] == ["0", "0.2", "0.4", "0.6", "0.8"]


class TestOracleCheck:
    def test_smoke_run_passes(self, capsys):
        code = cli_dispatch([
            "oracle-check", "--trials", "4", "--n-sim", "20000",
            "--threshold", "0.75",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("PASS") == 5


class TestUsage:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert cli_dispatch(["frobnicate"]) == 2

    def test_unknown_flag_exits_2(self, capsys):
        assert cli_dispatch(["gen", "--no-such-flag"]) == 2

    def test_no_command_exits_2(self, capsys):
        assert cli_dispatch([]) == 2

    def test_config_file_overrides_defaults(self, scenario_file, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"policy": "random", "n_sim": 64, "particles": 16}))
        code = cli_dispatch([
            "run", "--scenario", scenario_file, "--seed", "7",
            "--config", str(cfg),
        ])
        assert code == 0
        assert "policy=random" in capsys.readouterr().out
