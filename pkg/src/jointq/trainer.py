"""The learning loop: per-agent dueling networks trained on joint-action Q-vectors.

Each environment step builds the Q-vector at the current state from every
agent's prediction network, picks a joint action epsilon-greedily through
the configured selector, stores the transition, and (once the buffer is
warm) samples a batch, computes bootstrap targets from the target networks
at the prediction networks' selected next action, and takes one optimizer
step per agent.  Target networks are refreshed with a full parameter copy
every ``target_sync_steps`` gradient steps.  Everything is driven by one
seeded generator, so a (config, seed) pair reproduces a run exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from jointq.nets import (
    DuelingNetwork,
    TrainingError,
    clone_parameters,
    forward,
    forward_batch,
    gradient,
    init_network,
    init_optimizer,
    optimizer_step,
)
from jointq.oracle import greedy_action_lowest
from jointq.replay import ReplayBuffer, Transition
from jointq.selectors import (
    JointAction,
    PayoffTensor,
    SelectorKind,
    select_action,
    select_actions_batch,
)


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters of one training run."""

    selector: SelectorKind
    episodes: int = 2000
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int | None = None  # default: 60% of the episodes
    target_sync_steps: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    buffer_capacity: int = 10_000
    buffer_min_fill: int = 200
    hidden_sizes: tuple[int, ...] = (64, 64)

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        if isinstance(self.selector, str):
            object.__setattr__(self, "selector", SelectorKind(self.selector))
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.episodes < 1 or self.target_sync_steps < 1 or self.batch_size < 1:
            raise ValueError("episodes, target_sync_steps and batch_size must be >= 1")
        if self.epsilon_decay_episodes is not None and self.epsilon_decay_episodes < 1:
            raise ValueError("epsilon_decay_episodes must be >= 1 when given")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @property
    def resolved_decay_episodes(self) -> int:
        if self.epsilon_decay_episodes is not None:
            return self.epsilon_decay_episodes
        return max(1, int(0.6 * self.episodes))


def epsilon_for_episode(config: TrainerConfig, episode: int) -> float:
    """Linear decay from epsilon_start to epsilon_end over the decay window."""
    span = config.resolved_decay_episodes
    frac = min(1.0, episode / span)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def config_hash(config: TrainerConfig) -> str:
    payload = asdict(config)
    payload["selector"] = config.selector.value
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(eq=False)
class AgentNetworks:
    """Prediction and target networks for every agent, plus the action grid."""

    prediction: list[DuelingNetwork]
    target: list[DuelingNetwork]
    action_counts: tuple[int, ...]

    @property
    def n_agents(self) -> int:
        return len(self.prediction)

    def sync_targets(self) -> None:
        self.target = [clone_parameters(net) for net in self.prediction]


@dataclass(eq=False)
class EpisodeRecord:
    episode: int
    returns: np.ndarray
    epsilon: float
    mean_loss: float
    nash_fallbacks: int

    @property
    def total_return(self) -> float:
        return float(self.returns.sum())


@dataclass(eq=False)
class RunLog:
    seed: int
    selector: SelectorKind
    config_hash: str
    episodes: list[EpisodeRecord] = field(default_factory=list)


def q_tensor_at(
    nets: list[DuelingNetwork], state: np.ndarray, action_counts
) -> PayoffTensor:
    """The joint Q-vector at one state: one network evaluation per agent."""
    counts = tuple(action_counts)
    rows = [forward(net, state).reshape(counts) for net in nets]
    return PayoffTensor(np.stack(rows))


def _epsilon_greedy(
    q: PayoffTensor, epsilon: float, selector: SelectorKind, rng: np.random.Generator
) -> tuple[JointAction, bool]:
    if rng.random() < epsilon:
        flat = int(rng.integers(q.joint_action_count))
        return tuple(int(c) for c in np.unravel_index(flat, q.action_counts)), False
    return select_action(q, selector, rng)


def epsilon_greedy(
    q: PayoffTensor, epsilon: float, selector: SelectorKind, rng: np.random.Generator
) -> JointAction:
    """With probability epsilon a uniformly random joint action, else the selector's pick."""
    if not 0 <= epsilon <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    return _epsilon_greedy(q, epsilon, selector, rng)[0]


def compute_targets(
    batch: list[Transition],
    agent_nets: AgentNetworks,
    selector: SelectorKind,
    gamma: float,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, int]:
    """Per-agent regression targets for a batch, and the Nash-fallback count.

    Terminal transitions contribute their reward vector exactly.  Otherwise
    the next-state joint action is chosen by applying the selector to the
    *prediction* networks' Q-vector, and every agent's *target* network is
    indexed at that same action:  r_i + gamma * Q_target_i(s', a*).
    Ties (and multiple equilibria) are resolved by ``rng``; without one the
    deterministic lowest-index rule is used.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    n = agent_nets.n_agents
    counts = agent_nets.action_counts
    targets = np.stack([t.rewards for t in batch]).astype(np.float64)
    fallbacks = 0
    open_rows = [b for b, t in enumerate(batch) if not t.terminal]
    if gamma == 0.0 or not open_rows:
        return targets, fallbacks

    next_states = np.stack([batch[b].next_state for b in open_rows])
    pred_next = np.stack(
        [forward_batch(net, next_states) for net in agent_nets.prediction], axis=1
    )  # (rows, n, joint)
    targ_next = np.stack(
        [forward_batch(net, next_states) for net in agent_nets.target], axis=1
    )
    stacked = pred_next.reshape(len(open_rows), n, *counts)
    if rng is None:
        flats = np.empty(len(open_rows), dtype=np.intp)
        for row in range(len(open_rows)):
            tensor = PayoffTensor(stacked[row])
            a_star, fallback = greedy_action_lowest(tensor, selector)
            fallbacks += int(fallback)
            flats[row] = tensor.flat_index(a_star)
    else:
        flats, fallbacks = select_actions_batch(stacked, selector, rng)
    rows = np.arange(len(open_rows))
    targets[open_rows] += gamma * targ_next[rows, :, flats]
    return targets, fallbacks


def initial_networks(env, config: TrainerConfig) -> AgentNetworks:
    """Freshly initialized per-agent networks; targets start as exact copies."""
    counts = tuple(env.action_counts)
    joint = int(np.prod(counts))
    layer_sizes = (env.state_dim, *config.hidden_sizes)
    seeds = np.random.SeedSequence(config.seed).generate_state(env.n_agents)
    prediction = [init_network(layer_sizes, joint, seed=int(s)) for s in seeds]
    target = [clone_parameters(net) for net in prediction]
    return AgentNetworks(prediction, target, counts)


def train(env, config: TrainerConfig) -> tuple[AgentNetworks, RunLog]:
    """Run the full learning loop for ``config.episodes`` episodes.

    A single run is strictly sequential and owns its env, buffer, and
    networks; independent runs (seeds x selectors) share nothing and can
    execute in parallel processes.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    nets = initial_networks(env, config)
    optimizers = [
        init_optimizer(net, learning_rate=config.learning_rate) for net in nets.prediction
    ]
    buffer = ReplayBuffer(capacity=config.buffer_capacity, min_fill=config.buffer_min_fill)
    log = RunLog(seed=config.seed, selector=config.selector, config_hash=config_hash(config))

    gradient_steps = 0
    for episode in range(config.episodes):
        epsilon = epsilon_for_episode(config, episode)
        obs = env.reset()
        episode_returns = np.zeros(env.n_agents)
        losses: list[float] = []
        fallbacks = 0
        terminal = False
        while not terminal:
            state_vec = obs.state_vector
            q = q_tensor_at(nets.prediction, state_vec, nets.action_counts)
            action, fallback = _epsilon_greedy(q, epsilon, config.selector, rng)
            fallbacks += int(fallback)
            result = env.step(action)
            buffer.push(
                Transition(
                    state=state_vec,
                    next_state=result.observation.state_vector,
                    action=action,
                    rewards=result.rewards,
                    terminal=result.terminal,
                )
            )
            episode_returns += result.rewards
            obs = result.observation
            terminal = result.terminal

            batch = buffer.sample(config.batch_size, rng)
            if batch is None:
                continue
            targets, target_fallbacks = compute_targets(
                batch, nets, config.selector, config.gamma, rng
            )
            fallbacks += target_fallbacks
            states = np.stack([t.state for t in batch])
            indices = [
                int(np.ravel_multi_index(t.action, nets.action_counts)) for t in batch
            ]
            step_losses = []
            for i in range(nets.n_agents):
                grads, loss = gradient(nets.prediction[i], states, indices, targets[:, i])
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss for agent {i} at episode {episode}, "
                        f"gradient step {gradient_steps}"
                    )
                optimizer_step(nets.prediction[i], grads, optimizers[i])
                step_losses.append(loss)
            losses.append(float(np.mean(step_losses)))
            gradient_steps += 1
            if gradient_steps % config.target_sync_steps == 0:
                nets.sync_targets()

        log.episodes.append(
            EpisodeRecord(
                episode=episode,
                returns=episode_returns,
                epsilon=epsilon,
                mean_loss=float(np.mean(losses)) if losses else 0.0,
                nash_fallbacks=fallbacks,
            )
        )
    return nets, log


@dataclass(eq=False)
class EvaluationResult:
    mean_returns: np.ndarray
    episode_returns: list[np.ndarray]
    action_map: dict
    trajectories: list[list[tuple]]


def evaluate_policy(
    env, agent_nets: AgentNetworks, selector: SelectorKind, episodes: int, rng
) -> EvaluationResult:
    """Greedy (epsilon = 0) rollouts; reports returns and the action taken per state.

    ``action_map`` records the first greedy joint action observed at each
    environment state; trajectories list every (state, action) pair.
    """
    returns = []
    action_map: dict = {}
    trajectories = []
    for _ in range(episodes):
        obs = env.reset()
        total = np.zeros(env.n_agents)
        steps: list[tuple] = []
        while True:
            state_key = env.state
            q = q_tensor_at(agent_nets.prediction, obs.state_vector, agent_nets.action_counts)
            action, _ = select_action(q, selector, rng)
            action_map.setdefault(state_key, action)
            steps.append((state_key, action))
            result = env.step(action)
            total += result.rewards
            obs = result.observation
            if result.terminal:
                break
        returns.append(total)
        trajectories.append(steps)
    mean_returns = np.mean(np.stack(returns), axis=0)
    return EvaluationResult(mean_returns, returns, action_map, trajectories)
