"""Desk-scale environments: a repeated stage game and a discrete two-arm lift MDP.

Both expose the same surface: ``reset()`` / ``step(joint_action)`` for rollouts
and training, plus full state enumeration (``states`` / ``transition`` /
``is_terminal_state`` / ``observe``) so exact solvers can treat them as
enumerable deterministic MDPs.

The lift MDP tracks two arm heights on an integer ladder.  Per step, each
arm either stays or lifts one level.  Rewards decompose into a shared term
(one arm lifting earns ``p1`` for both agents, both lifting earns ``p2``,
paid only while both arms are below the top), a tilt interaction (when the
arms are at unequal heights, the trailing arm catching up earns ``+delta``
for both, while the leading arm pulling further ahead costs the trailing
agent ``delta``), and a per-agent action cost ``c_i`` charged on lifting.
A tilt of two or more levels means the pot has slipped off the grippers:
such states pay action costs only, with no shared or interaction rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from jointq.selectors import JointAction, PayoffTensor

STAY, LIFT = 0, 1

ACTION_LABELS = {STAY: "stay", LIFT: "lift"}


class ConfigError(ValueError):
    """A configuration value violates a documented constraint."""


class EnvUsageError(RuntimeError):
    """The environment was driven incorrectly (e.g. stepped after terminal)."""


@dataclass(frozen=True, eq=False)
class EnvObservation:
    state_vector: np.ndarray
    step_index: int


@dataclass(frozen=True, eq=False)
class StepResult:
    observation: EnvObservation
    rewards: np.ndarray
    terminal: bool


def format_action(action: JointAction) -> str:
    return "(" + ",".join(ACTION_LABELS.get(a, str(a)) for a in action) + ")"


@dataclass(frozen=True)
class LiftEnvConfig:
    """Constants of the lift MDP; validation names the violated inequality.

    The default ``delta`` exceeds the lifting cost so the trailing arm still
    profits from levelling the pot at the top; smaller values (down to the
    inequality bound) are valid but leave the exact maximin fixed point
    cycling at the last rung for discounts near 1.  ``gamma`` is the
    discount at which the configured tables shape every selector's exact
    solution; it is a hint consumed by run configurations, not by the env.
    """

    height_levels: int = 5
    horizon: int = 100
    p1: float = 8.0
    p2: float = 10.0
    costs: tuple[float, float] = (-5.0, -5.0)
    delta: float = 5.5
    gamma: float = 0.3

    def __post_init__(self) -> None:
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if len(self.costs) != 2:
            raise ConfigError("costs must list exactly two per-arm values")
        checks = [
            (self.height_levels >= 1, "height_levels >= 1"),
            (self.horizon >= 1, "horizon >= 1"),
            (self.p1 > 5, "p1 > 5"),
            (self.p2 > self.p1, "p2 > p1"),
            (self.p1 > self.p2 - 5, "p1 > p2 - 5"),
            (self.delta > 0, "delta > 0"),
            (self.p1 - self.delta < self.p2 - 5, "p1 - delta < p2 - 5"),
            (self.p1 + self.delta > self.p2, "p1 + delta > p2"),
        ]
        for ok, name in checks:
            if not ok:
                raise ConfigError(f"constraint violated: {name}")
        if not 0 <= self.gamma < 1:
            raise ConfigError("constraint violated: 0 <= gamma < 1")


def case_payoffs(p1: float, p2: float, costs) -> PayoffTensor:
    """The 2x2 flat-state reward table for the given shared rewards and costs."""
    c1, c2 = costs
    shared = {0: 0.0, 1: p1, 2: p2}
    vals = np.zeros((2, 2, 2))
    for a1 in (STAY, LIFT):
        for a2 in (STAY, LIFT):
            s = shared[a1 + a2]
            vals[0, a1, a2] = s + (c1 if a1 == LIFT else 0.0)
            vals[1, a1, a2] = s + (c2 if a2 == LIFT else 0.0)
    return PayoffTensor(vals)


class StageGameEnv:
    """A repeated normal-form game with a constant observation.

    Episodes end after ``episode_length`` steps; for exact solvers the game
    is the single-state MDP that loops forever.
    """

    def __init__(self, payoffs: PayoffTensor, episode_length: int = 1):
        if episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        self.payoffs = payoffs
        self.episode_length = episode_length
        self.n_agents = payoffs.n_agents
        self.action_counts = payoffs.action_counts
        self.state_dim = 1
        self._step_index = 0
        self._done = False
        self._started = False

    # rollout surface -----------------------------------------------------
    @property
    def state(self):
        return 0

    def reset(self) -> EnvObservation:
        self._step_index = 0
        self._done = False
        self._started = True
        return EnvObservation(self.observe(0), 0)

    def step(self, action: JointAction) -> StepResult:
        if not self._started:
            raise EnvUsageError("call reset() before step()")
        if self._done:
            raise EnvUsageError("episode is over; call reset()")
        self.payoffs.check_action(action)
        rewards = np.array([self.payoffs.value(i, action) for i in range(self.n_agents)])
        self._step_index += 1
        self._done = self._step_index >= self.episode_length
        obs = EnvObservation(self.observe(0), self._step_index)
        return StepResult(obs, rewards, self._done)

    # enumeration surface -------------------------------------------------
    def states(self) -> list:
        return [0]

    def is_terminal_state(self, state) -> bool:
        return False

    def observe(self, state) -> np.ndarray:
        return np.array([1.0])

    def transition(self, state, action: JointAction):
        rewards = np.array([self.payoffs.value(i, action) for i in range(self.n_agents)])
        return 0, rewards


class LiftEnv:
    """Two arms lifting on an integer height ladder; see the module docstring."""

    def __init__(self, cfg: LiftEnvConfig):
        self.cfg = cfg
        self.n_agents = 2
        self.action_counts = (2, 2)
        self.state_dim = 2
        self._heights = (0, 0)
        self._step_index = 0
        self._done = False
        self._started = False

    # rollout surface -----------------------------------------------------
    @property
    def state(self) -> tuple[int, int]:
        return self._heights

    def reset(self) -> EnvObservation:
        self._heights = (0, 0)
        self._step_index = 0
        self._done = False
        self._started = True
        return EnvObservation(self.observe(self._heights), 0)

    def step(self, action: JointAction) -> StepResult:
        if not self._started:
            raise EnvUsageError("call reset() before step()")
        if self._done:
            raise EnvUsageError("episode is over; call reset()")
        self._check_action(action)
        rewards = self.rewards_at(self._heights, action)
        self._heights = self._next_heights(self._heights, action)
        self._step_index += 1
        self._done = self.is_terminal_state(self._heights) or self._step_index >= self.cfg.horizon
        obs = EnvObservation(self.observe(self._heights), self._step_index)
        return StepResult(obs, rewards, self._done)

    # enumeration surface -------------------------------------------------
    def states(self) -> list[tuple[int, int]]:
        top = self.cfg.height_levels
        return [(h1, h2) for h1 in range(top + 1) for h2 in range(top + 1)]

    def is_terminal_state(self, state) -> bool:
        top = self.cfg.height_levels
        return state == (top, top)

    def observe(self, state) -> np.ndarray:
        top = self.cfg.height_levels
        return np.array([state[0] / top, state[1] / top])

    def transition(self, state, action: JointAction):
        self._check_heights(state)
        self._check_action(action)
        return self._next_heights(state, action), self.rewards_at(state, action)

    # reward mechanics ----------------------------------------------------
    def rewards_at(self, heights, action: JointAction) -> np.ndarray:
        """Per-agent one-step rewards for acting from the given heights."""
        self._check_heights(heights)
        self._check_action(action)
        cfg = self.cfg
        h1, h2 = heights
        dropped = abs(h1 - h2) >= 2  # pot slipped off the grippers
        below_top = h1 < cfg.height_levels and h2 < cfg.height_levels
        shared = 0.0
        if below_top and not dropped:
            lifted = sum(1 for a in action if a == LIFT)
            shared = {0: 0.0, 1: cfg.p1, 2: cfg.p2}[lifted]
        r = [shared, shared]
        if h1 != h2 and not dropped:
            lead, trail = (0, 1) if h1 > h2 else (1, 0)
            if action[lead] == LIFT and action[trail] == STAY:
                r[trail] -= cfg.delta
            elif action[trail] == LIFT and action[lead] == STAY:
                r[0] += cfg.delta
                r[1] += cfg.delta
        for i in (0, 1):
            if action[i] == LIFT:
                r[i] += cfg.costs[i]
        return np.array(r)

    def reward_tensor_at(self, heights) -> PayoffTensor:
        """The full one-step reward table at a state, as a payoff tensor."""
        vals = np.zeros((2, 2, 2))
        for a1 in (STAY, LIFT):
            for a2 in (STAY, LIFT):
                vals[:, a1, a2] = self.rewards_at(heights, (a1, a2))
        return PayoffTensor(vals)

    def _next_heights(self, heights, action: JointAction) -> tuple[int, int]:
        top = self.cfg.height_levels
        return tuple(min(h + (1 if a == LIFT else 0), top) for h, a in zip(heights, action))

    def _check_action(self, action: JointAction) -> None:
        if len(action) != 2 or any(a not in (STAY, LIFT) for a in action):
            raise ValueError(f"lift actions are (a1, a2) with each in {{stay={STAY}, lift={LIFT}}}, got {action}")

    def _check_heights(self, heights) -> None:
        top = self.cfg.height_levels
        if len(heights) != 2 or any(not 0 <= h <= top for h in heights):
            raise ValueError(f"heights {heights} out of range [0, {top}]")
