"""Tests for config parsing, the experiment runner, and exit codes."""

import csv
from pathlib import Path

import numpy as np
import pytest

from jointq.cli import (
    EXIT_CONFIG_CONSTRAINT,
    EXIT_CONFIG_MISSING,
    EXIT_CONFIG_SYNTAX,
    EXIT_OK,
    RUN_CSV_FIELDS,
    main,
    parse_config,
    run_experiment,
    solve_command,
)
from jointq.envs import ConfigError
from jointq.selectors import SelectorKind

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, text) -> Path:
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


def tiny_stage_config(tmp_path, **overrides) -> Path:
    values = dict(
        case="tiny",
        env="stage",
        selector="maximin",
        costs=[-5, -5],
        episodes=60,
        batch_size=8,
        buffer_min_fill=8,
        repetitions=1,
        eval_episodes=1,
        gamma=0.9,
        out_dir=str(tmp_path / "out"),
    )
    values.update(overrides)
    lines = []
    for key, val in values.items():
        lines.append(f"{key}: {val}")
    return write_config(tmp_path, "\n".join(lines))


class TestParseConfig:
    def test_bundled_case1_maximin(self):
        cfg = parse_config(CONFIG_DIR / "case1_maximin.yaml")
        assert cfg.selector is SelectorKind.MAXIMIN
        assert cfg.lift_cfg.costs == (-5.0, -5.0)
        assert cfg.env_kind == "lift"
        assert cfg.repetitions == 6

    def test_all_bundled_configs_parse(self):
        for path in sorted(CONFIG_DIR.glob("*.yaml")):
            cfg = parse_config(path)
            assert cfg.case == path.stem

    def test_rejects_low_p1_naming_inequality(self, tmp_path):
        path = write_config(tmp_path, "env: lift\nselector: max\np1: 4.0\n")
        with pytest.raises(ConfigError, match="p1 > 5"):
            parse_config(path)

    def test_rejects_unknown_key(self, tmp_path):
        path = write_config(tmp_path, "selector: max\nlearning_rte: 0.1\n")
        with pytest.raises(ConfigError, match="unknown config key: learning_rte"):
            parse_config(path)

    def test_rejects_env_mismatched_key(self, tmp_path):
        path = write_config(tmp_path, "env: lift\nselector: max\nepisode_length: 3\n")
        with pytest.raises(ConfigError, match="does not apply"):
            parse_config(path)

    def test_rejects_bad_selector(self, tmp_path):
        path = write_config(tmp_path, "selector: minimax\n")
        with pytest.raises(ConfigError, match="selector"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_config(tmp_path / "nope.yaml")

    def test_bad_yaml_is_syntax_error(self, tmp_path):
        path = write_config(tmp_path, "selector: [unclosed\n")
        with pytest.raises(SyntaxError):
            parse_config(path)

    def test_explicit_stage_payoffs(self, tmp_path):
        path = write_config(
            tmp_path,
            "env: stage\nselector: nash\n"
            "payoffs:\n  - [1, -1, -1, 1]\n  - [-1, 1, 1, -1]\n",
        )
        cfg = parse_config(path)
        assert cfg.stage_payoffs.values[0, 0, 0] == 1.0


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG_MISSING

    def test_syntax_error(self, tmp_path):
        path = write_config(tmp_path, "selector: [unclosed\n")
        assert main(["run", str(path)]) == EXIT_CONFIG_SYNTAX

    def test_constraint_error(self, tmp_path):
        path = write_config(tmp_path, "env: lift\nselector: max\np1: 4.0\n")
        assert main(["run", str(path)]) == EXIT_CONFIG_CONSTRAINT

    def test_successful_tiny_run(self, tmp_path):
        path = tiny_stage_config(tmp_path)
        assert main(["run", str(path)]) == EXIT_OK


class TestRunExperiment:
    def test_writes_run_csv_summary_and_oracle(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path, repetitions=2))
        assert run_experiment(cfg) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "tiny_r00.csv").exists()
        assert (out / "tiny_r01.csv").exists()
        assert (out / "tiny_summary.csv").exists()
        assert (out / "tiny_oracle_maximin.txt").exists()

    def test_run_csv_schema_and_round_trip(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path))
        run_experiment(cfg)
        with open(tmp_path / "out" / "tiny_r00.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == RUN_CSV_FIELDS
        assert len(rows) == 60
        assert rows[0]["run_id"] == "tiny_r00"
        assert rows[0]["seed"] == "0"
        # float columns round-trip exactly through repr
        for row in rows:
            total = float(row["return_agent_1"]) + float(row["return_agent_2"])
            assert float(row["return_total"]) == total

    def test_summary_matches_oracle(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path, episodes=400))
        run_experiment(cfg)
        with open(tmp_path / "out" / "tiny_summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["status"] == "ok"
        assert rows[0]["oracle_match"] in {"MATCH", "MISMATCH"}
        assert rows[0]["final_action"] == "(lift,lift)"

    def test_zero_repetitions_only_oracle(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path, repetitions=0))
        assert run_experiment(cfg) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "tiny_oracle_maximin.txt").exists()
        assert not list(out.glob("tiny_r*.csv"))

    def test_identical_config_identical_csv_bytes(self, tmp_path):
        cfg_a = parse_config(tiny_stage_config(tmp_path, out_dir=str(tmp_path / "a")))
        cfg_b = parse_config(tiny_stage_config(tmp_path, out_dir=str(tmp_path / "b")))
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        a = (tmp_path / "a" / "tiny_r00.csv").read_bytes()
        b = (tmp_path / "b" / "tiny_r00.csv").read_bytes()
        assert a == b

    def test_run_csv_rows_equal_in_process_log(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path))
        run_experiment(cfg)
        from jointq.trainer import train

        _, log = train(cfg.make_env(), cfg.trainer_config(seed=cfg.base_seed))
        with open(tmp_path / "out" / "tiny_r00.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(log.episodes)
        for row, rec in zip(rows, log.episodes):
            assert float(row["return_agent_1"]) == rec.returns[0]
            assert float(row["return_agent_2"]) == rec.returns[1]
            assert float(row["mean_loss"]) == rec.mean_loss
            assert float(row["epsilon"]) == rec.epsilon
            assert int(row["nash_fallbacks"]) == rec.nash_fallbacks

    def test_checkpoints_round_trip(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path, save_checkpoints=True))
        run_experiment(cfg)
        from jointq.nets import load_network

        for agent in (1, 2):
            net = load_network(tmp_path / "out" / f"tiny_r00_agent{agent}.net")
            assert net.joint_action_count == 4

    def test_seed_override_changes_runs(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path))
        run_experiment(cfg)
        first = (tmp_path / "out" / "tiny_r00.csv").read_bytes()
        assert main(["run", str(tiny_stage_config(tmp_path)), "--seed", "9"]) == EXIT_OK
        second = (tmp_path / "out" / "tiny_r00.csv").read_bytes()
        assert first != second


class TestSolveCommand:
    def test_writes_artifact_per_selector(self, tmp_path):
        cfg = parse_config(tiny_stage_config(tmp_path))
        assert solve_command(cfg) == EXIT_OK
        out = tmp_path / "out"
        for kind in ("max", "nash", "maximin"):
            assert (out / f"tiny_oracle_{kind}.txt").exists()

    def test_lift_case1_flat_actions_match_tables(self, tmp_path):
        path = write_config(
            tmp_path,
            "case: c1\nenv: lift\nselector: max\ncosts: [-5, -5]\ngamma: 0.3\n"
            f"out_dir: {tmp_path / 'out'}\n",
        )
        cfg = parse_config(path)
        assert solve_command(cfg) == EXIT_OK
        out = tmp_path / "out"
        assert "initial_state_action=(0, 0)" in (out / "c1_oracle_max.txt").read_text()
        assert "initial_state_action=(1, 1)" in (out / "c1_oracle_maximin.txt").read_text()
        nash_text = (out / "c1_oracle_nash.txt").read_text()
        assert "initial_state_action=(0, 1)" in nash_text

    def test_lift_case2_flat_actions_match_tables(self, tmp_path):
        path = write_config(
            tmp_path,
            "case: c2\nenv: lift\nselector: max\ncosts: [0, -5]\ngamma: 0.3\n"
            f"out_dir: {tmp_path / 'out'}\n",
        )
        cfg = parse_config(path)
        assert solve_command(cfg) == EXIT_OK
        out = tmp_path / "out"
        assert "initial_state_action=(1, 0)" in (out / "c2_oracle_max.txt").read_text()
        assert "initial_state_action=(1, 0)" in (out / "c2_oracle_nash.txt").read_text()
        assert "initial_state_action=(1, 1)" in (out / "c2_oracle_maximin.txt").read_text()

    def test_tilted_state_tensor_matches_modified_table(self, tmp_path):
        # case 2 at heights (1, 0): the delta-shifted entries, delta=4 instantiation
        path = write_config(
            tmp_path,
            "case: tilt\nenv: lift\nselector: nash\ncosts: [0, -5]\ndelta: 4.0\ngamma: 0.0\n"
            f"out_dir: {tmp_path / 'out'}\n",
        )
        cfg = parse_config(path)
        solve_command(cfg)
        text = (tmp_path / "out" / "tilt_oracle_nash.txt").read_text()
        lines = text.splitlines()
        idx = lines.index("state (1, 0)")
        block = lines[idx + 1 : idx + 4]
        assert block[0] == "2 2 2"
        assert [float(x) for x in block[1].split()] == [0.0, 12.0, 8.0, 10.0]
        assert [float(x) for x in block[2].split()] == [0.0, 7.0, 4.0, 5.0]
        assert "greedy (0, 1)" in "\n".join(lines[idx : idx + 6])


class TestSelftestCommand:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 5
