"""Experiment runner: seeded training sweeps, CSV logs, oracle artifacts.

Commands
    jointq run <config.yaml>      train `repetitions` seeded runs, write CSVs
    jointq solve <config.yaml>    write the exact solution for every selector
    jointq selftest               execute the property suites

Exit codes
    0  success
    2  config file missing
    3  config syntax error
    4  config constraint violation
    5  run failure (every repetition aborted)
    6  oracle non-convergence

Run CSV schema (one file per repetition, comma-separated, header row):
    run_id,seed,episode,return_agent_1,return_agent_2,return_total,
    epsilon,mean_loss,nash_fallbacks
Floats are written with shortest round-trip precision, so parsing a row
recovers the logged values exactly.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from jointq.envs import (
    ConfigError,
    LiftEnv,
    LiftEnvConfig,
    StageGameEnv,
    case_payoffs,
    format_action,
)
from jointq.nets import TrainingError, save_network
from jointq.oracle import export_solution, solve_mdp
from jointq.selectors import PayoffTensor, SelectorKind
from jointq.trainer import RunLog, TrainerConfig, evaluate_policy, train

EXIT_OK = 0
EXIT_CONFIG_MISSING = 2
EXIT_CONFIG_SYNTAX = 3
EXIT_CONFIG_CONSTRAINT = 4
EXIT_RUN_FAILURE = 5
EXIT_ORACLE = 6

RUN_CSV_FIELDS = [
    "run_id",
    "seed",
    "episode",
    "return_agent_1",
    "return_agent_2",
    "return_total",
    "epsilon",
    "mean_loss",
    "nash_fallbacks",
]

SUMMARY_CSV_FIELDS = [
    "run_id",
    "seed",
    "status",
    "episodes",
    "final_action",
    "oracle_match",
    "nash_fallbacks_total",
    "diagnostic",
]

# key -> (caster, applies to stage, applies to lift)
_SCHEMA = {
    "case": (str, True, True),
    "env": (str, True, True),
    "selector": (str, True, True),
    "costs": (lambda v: tuple(float(x) for x in v), True, True),
    "p1": (float, True, True),
    "p2": (float, True, True),
    "delta": (float, True, True),
    "height_levels": (int, False, True),
    "horizon": (int, False, True),
    "episode_length": (int, True, False),
    "payoffs": (lambda v: [list(map(float, row)) for row in v], True, False),
    "gamma": (float, True, True),
    "episodes": (int, True, True),
    "epsilon_start": (float, True, True),
    "epsilon_end": (float, True, True),
    "epsilon_decay_episodes": (lambda v: None if v is None else int(v), True, True),
    "target_sync_steps": (int, True, True),
    "batch_size": (int, True, True),
    "learning_rate": (float, True, True),
    "buffer_capacity": (int, True, True),
    "buffer_min_fill": (int, True, True),
    "hidden_sizes": (lambda v: tuple(int(x) for x in v), True, True),
    "repetitions": (int, True, True),
    "base_seed": (int, True, True),
    "out_dir": (str, True, True),
    "eval_episodes": (int, True, True),
    "save_checkpoints": (bool, True, True),
}


@dataclass
class RunConfig:
    """A fully validated experiment: environment, trainer settings, sweep shape."""

    case: str
    env_kind: str
    selector: SelectorKind
    lift_cfg: LiftEnvConfig | None
    stage_payoffs: PayoffTensor | None
    episode_length: int
    gamma: float
    episodes: int
    epsilon_start: float
    epsilon_end: float
    epsilon_decay_episodes: int | None
    target_sync_steps: int
    batch_size: int
    learning_rate: float
    buffer_capacity: int
    buffer_min_fill: int
    hidden_sizes: tuple[int, ...]
    repetitions: int
    base_seed: int
    out_dir: str
    eval_episodes: int
    save_checkpoints: bool = False

    def make_env(self):
        if self.env_kind == "lift":
            return LiftEnv(self.lift_cfg)
        return StageGameEnv(self.stage_payoffs, episode_length=self.episode_length)

    def trainer_config(self, seed: int) -> TrainerConfig:
        return TrainerConfig(
            selector=self.selector,
            episodes=self.episodes,
            gamma=self.gamma,
            epsilon_start=self.epsilon_start,
            epsilon_end=self.epsilon_end,
            epsilon_decay_episodes=self.epsilon_decay_episodes,
            target_sync_steps=self.target_sync_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=seed,
            buffer_capacity=self.buffer_capacity,
            buffer_min_fill=self.buffer_min_fill,
            hidden_sizes=self.hidden_sizes,
        )


def parse_config(path) -> RunConfig:
    """Load and fully validate a YAML run configuration; unknown keys are errors."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SyntaxError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise SyntaxError("config must be a mapping of keys to values")

    env_kind = raw.get("env", "lift")
    if env_kind not in ("stage", "lift"):
        raise ConfigError(f"env must be 'stage' or 'lift', got {env_kind!r}")
    column = 1 if env_kind == "stage" else 2
    values = {}
    for key, value in raw.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        if not _SCHEMA[key][column]:
            raise ConfigError(f"config key {key} does not apply to the {env_kind} environment")
        try:
            values[key] = _SCHEMA[key][0](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key} has invalid value {value!r}: {exc}") from exc

    if "selector" not in values:
        raise ConfigError("config must name a selector (max | nash | maximin)")
    try:
        selector = SelectorKind(values["selector"])
    except ValueError:
        raise ConfigError(
            f"selector must be one of max, nash, maximin; got {values['selector']!r}"
        ) from None

    costs = values.get("costs", (-5.0, -5.0))
    lift_cfg = None
    stage_payoffs = None
    if env_kind == "lift":
        lift_cfg = LiftEnvConfig(
            height_levels=values.get("height_levels", 5),
            horizon=values.get("horizon", 100),
            p1=values.get("p1", 8.0),
            p2=values.get("p2", 10.0),
            costs=costs,
            delta=values.get("delta", 5.5),
            gamma=values.get("gamma", 0.3),
        )
    else:
        if "payoffs" in values:
            rows = values["payoffs"]
            per_agent = len(rows[0])
            side = int(round(per_agent ** 0.5))
            if side * side != per_agent:
                raise ConfigError("explicit payoffs must describe a square two-agent game")
            stage_payoffs = PayoffTensor.from_per_agent_rows((side, side), rows)
        else:
            # validate the table constants through the lift inequalities
            probe = LiftEnvConfig(
                p1=values.get("p1", 8.0),
                p2=values.get("p2", 10.0),
                costs=costs,
                delta=values.get("delta", 5.5),
            )
            stage_payoffs = case_payoffs(probe.p1, probe.p2, probe.costs)

    gamma = values.get("gamma", lift_cfg.gamma if lift_cfg else 0.9)
    config = RunConfig(
        case=values.get("case", path.stem),
        env_kind=env_kind,
        selector=selector,
        lift_cfg=lift_cfg,
        stage_payoffs=stage_payoffs,
        episode_length=values.get("episode_length", 1),
        gamma=gamma,
        episodes=values.get("episodes", 2000),
        epsilon_start=values.get("epsilon_start", 1.0),
        epsilon_end=values.get("epsilon_end", 0.05),
        epsilon_decay_episodes=values.get("epsilon_decay_episodes"),
        target_sync_steps=values.get("target_sync_steps", 200),
        batch_size=values.get("batch_size", 64),
        learning_rate=values.get("learning_rate", 1e-3),
        buffer_capacity=values.get("buffer_capacity", 10_000),
        buffer_min_fill=values.get("buffer_min_fill", 200),
        hidden_sizes=values.get("hidden_sizes", (64, 64)),
        repetitions=values.get("repetitions", 6),
        base_seed=values.get("base_seed", 0),
        out_dir=values.get("out_dir", f"results/{values.get('case', path.stem)}"),
        eval_episodes=values.get("eval_episodes", 1),
        save_checkpoints=values.get("save_checkpoints", False),
    )
    # surface invalid trainer numbers now rather than mid-sweep
    config.trainer_config(seed=config.base_seed)
    if config.repetitions < 0:
        raise ConfigError("repetitions cannot be negative")
    if config.eval_episodes < 1:
        raise ConfigError("eval_episodes must be >= 1")
    return config


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_csv(path, run_id: str, log: RunLog) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUN_CSV_FIELDS)
        for rec in log.episodes:
            writer.writerow(
                [
                    run_id,
                    log.seed,
                    rec.episode,
                    _fmt(float(rec.returns[0])),
                    _fmt(float(rec.returns[1])),
                    _fmt(rec.total_return),
                    _fmt(rec.epsilon),
                    _fmt(rec.mean_loss),
                    rec.nash_fallbacks,
                ]
            )


def run_experiment(cfg: RunConfig) -> int:
    """Execute the configured sweep; returns the process exit code."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    solution = solve_mdp(
        cfg.make_env(), cfg.selector, gamma=cfg.gamma, tolerance=1e-6, max_iters=10_000
    )
    initial_state = _initial_state(cfg)
    oracle_path = out / f"{cfg.case}_oracle_{cfg.selector.value}.txt"
    oracle_path.write_text(export_solution(solution, initial_state))
    optimal_set = set(solution.optimal.get(initial_state, ()))

    summary_rows = []
    aborted = 0
    for rep in range(cfg.repetitions):
        seed = cfg.base_seed + rep
        run_id = f"{cfg.case}_r{rep:02d}"
        trainer_cfg = cfg.trainer_config(seed)
        try:
            nets, log = train(cfg.make_env(), trainer_cfg)
        except TrainingError as exc:
            aborted += 1
            summary_rows.append(
                {
                    "run_id": run_id,
                    "seed": seed,
                    "status": "abort",
                    "episodes": 0,
                    "final_action": "",
                    "oracle_match": "",
                    "nash_fallbacks_total": 0,
                    "diagnostic": str(exc),
                }
            )
            continue
        write_run_csv(out / f"{run_id}.csv", run_id, log)
        if cfg.save_checkpoints:
            for i, net in enumerate(nets.prediction):
                save_network(net, out / f"{run_id}_agent{i + 1}.net")
        evaluation = evaluate_policy(
            cfg.make_env(), nets, cfg.selector, cfg.eval_episodes, np.random.default_rng(seed)
        )
        final_action = evaluation.action_map.get(initial_state)
        match = "MATCH" if final_action in optimal_set else "MISMATCH"
        summary_rows.append(
            {
                "run_id": run_id,
                "seed": seed,
                "status": "ok",
                "episodes": len(log.episodes),
                "final_action": format_action(final_action),
                "oracle_match": match,
                "nash_fallbacks_total": sum(r.nash_fallbacks for r in log.episodes),
                "diagnostic": "",
            }
        )

    with open(out / f"{cfg.case}_summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_CSV_FIELDS)
        writer.writeheader()
        writer.writerows(summary_rows)

    if not solution.converged:
        return EXIT_ORACLE
    if cfg.repetitions > 0 and aborted == cfg.repetitions:
        return EXIT_RUN_FAILURE
    return EXIT_OK


def _initial_state(cfg: RunConfig):
    return (0, 0) if cfg.env_kind == "lift" else 0


def solve_command(cfg: RunConfig) -> int:
    """Write the exact solution artifact for every selector; flag non-convergence."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_converged = True
    for kind in SelectorKind:
        solution = solve_mdp(cfg.make_env(), kind, gamma=cfg.gamma)
        all_converged &= solution.converged
        path = out / f"{cfg.case}_oracle_{kind.value}.txt"
        path.write_text(export_solution(solution, _initial_state(cfg)))
        flat = solution.greedy_action.get(_initial_state(cfg))
        print(
            f"{cfg.case} {kind.value}: converged={solution.converged} "
            f"iterations={solution.iterations} initial-state action={format_action(flat)}"
        )
    return EXIT_OK if all_converged else EXIT_ORACLE


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="jointq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="train seeded repetitions and write CSV logs")
    run_p.add_argument("config", help="path to the YAML run configuration")
    solve_p = sub.add_parser("solve", help="write exact oracle artifacts per selector")
    solve_p.add_argument("config", help="path to the YAML run configuration")
    for p in (run_p, solve_p):
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--reps", type=int, help="override the repetition count")
        p.add_argument(
            "--selector", choices=[k.value for k in SelectorKind], help="override the selector"
        )
    sub.add_parser("selftest", help="execute the property suites")

    args = parser.parse_args(argv)
    if args.command == "selftest":
        from jointq.selftest import run_all

        return EXIT_OK if run_all() else 1

    try:
        cfg = parse_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_MISSING
    except SyntaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_SYNTAX
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_CONSTRAINT

    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.reps is not None:
        cfg.repetitions = args.reps
    if args.selector:
        cfg.selector = SelectorKind(args.selector)

    if args.command == "run":
        return run_experiment(cfg)
    return solve_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
