"""Multi-agent deep Q-learning over joint actions with game-theoretic selection."""

from jointq.envs import LiftEnv, LiftEnvConfig, StageGameEnv, case_payoffs
from jointq.oracle import OracleSolution, greedy_rollout, solve_mdp
from jointq.selectors import (
    JointAction,
    PayoffTensor,
    SelectorKind,
    enumerate_nash,
    is_nash,
    select_max,
    select_maximin,
    select_nash,
)
from jointq.trainer import TrainerConfig, evaluate_policy, train

__version__ = "0.1.0"

__all__ = [
    "JointAction",
    "LiftEnv",
    "LiftEnvConfig",
    "OracleSolution",
    "PayoffTensor",
    "SelectorKind",
    "StageGameEnv",
    "TrainerConfig",
    "case_payoffs",
    "enumerate_nash",
    "evaluate_policy",
    "greedy_rollout",
    "is_nash",
    "select_max",
    "select_maximin",
    "select_nash",
    "solve_mdp",
    "train",
    "__version__",
]
