"""Exact ground truth for enumerable deterministic MDPs.

Fixed-point iteration on the per-agent Q-tensors:

    Q_i(s, a)  <-  r_i(s, a) + gamma * Q_i(s', a*(s'))

where ``a*(s')`` applies the configured selector to the previous sweep's
tensor at ``s'`` with a deterministic lowest-index tie-break, so the fixed
point and every test built on it are reproducible.  Learned policies are
validated against the *set* of optimal actions, never a single arbitrary
member.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from jointq.selectors import (
    JointAction,
    PayoffTensor,
    SelectorKind,
    optimal_action_set,
)


def greedy_action_lowest(q: PayoffTensor, kind: SelectorKind) -> tuple[JointAction, bool]:
    """Lowest-index member of the selector's optimal set; maximin fallback for empty Nash."""
    chosen = optimal_action_set(q, kind)
    if chosen:
        return min(chosen), False
    return min(optimal_action_set(q, SelectorKind.MAXIMIN)), True


@dataclass(eq=False)
class OracleSolution:
    """Converged Q-tensors and per-state optimal joint-action sets for one selector."""

    selector: SelectorKind
    gamma: float
    tolerance: float
    states: list
    q: dict
    optimal: dict
    greedy_action: dict
    empty_nash_states: tuple
    iterations: int
    residual: float
    converged: bool
    residual_monotone: bool

    def tensor(self, state) -> PayoffTensor:
        return self.q[state]


def solve_mdp(
    env,
    selector: SelectorKind,
    gamma: float = 0.9,
    tolerance: float = 1e-6,
    max_iters: int = 10_000,
) -> OracleSolution:
    """Iterate the selector-coupled Bellman update until the residual is small.

    The environment must expose ``states()``, ``is_terminal_state``,
    ``transition``, ``action_counts`` and ``n_agents``.  Non-convergence is
    reported on the solution, never silently.
    """
    if not hasattr(env, "states"):
        raise TypeError(f"{type(env).__name__} is not enumerable; the exact solver needs states()")
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    states = list(env.states())
    nonterminal = [s for s in states if not env.is_terminal_state(s)]
    counts = tuple(env.action_counts)
    n = env.n_agents
    actions = list(itertools.product(*(range(k) for k in counts)))
    moves = {s: {a: env.transition(s, a) for a in actions} for s in nonterminal}

    q = {s: np.zeros((n, *counts)) for s in states}
    residuals: list[float] = []
    converged = False
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        greedy = {
            s: greedy_action_lowest(PayoffTensor(q[s]), selector)[0] for s in nonterminal
        }
        sweep_residual = 0.0
        fresh = {}
        for s in nonterminal:
            arr = np.empty((n, *counts))
            for a in actions:
                nxt, rewards = moves[s][a]
                if env.is_terminal_state(nxt):
                    bootstrap = 0.0
                else:
                    bootstrap = q[nxt][(slice(None), *greedy[nxt])]
                arr[(slice(None), *a)] = rewards + gamma * bootstrap
            sweep_residual = max(sweep_residual, float(np.max(np.abs(arr - q[s]))))
            fresh[s] = arr
        q.update(fresh)
        residuals.append(sweep_residual)
        if sweep_residual < tolerance:
            converged = True
            break

    optimal = {}
    greedy_final = {}
    empty_nash = []
    for s in nonterminal:
        tensor = PayoffTensor(q[s])
        optimal[s] = optimal_action_set(tensor, selector)
        action, fallback = greedy_action_lowest(tensor, selector)
        greedy_final[s] = action
        if fallback:
            empty_nash.append(s)

    # monotone decrease is expected on the desk environments from sweep 2 on
    tail = residuals[1:]
    monotone = all(b <= a for a, b in zip(tail, tail[1:]))
    return OracleSolution(
        selector=selector,
        gamma=gamma,
        tolerance=tolerance,
        states=states,
        q={s: PayoffTensor(arr) for s, arr in q.items()},
        optimal=optimal,
        greedy_action=greedy_final,
        empty_nash_states=tuple(empty_nash),
        iterations=iterations,
        residual=residuals[-1] if residuals else float("inf"),
        converged=converged,
        residual_monotone=monotone,
    )


@dataclass(eq=False)
class RolloutResult:
    states: list
    actions: list
    rewards: list
    discounted_returns: np.ndarray
    undiscounted_returns: np.ndarray

    @property
    def final_state(self):
        return self.states[-1]


def greedy_rollout(env, solution: OracleSolution) -> RolloutResult:
    """Deterministic trajectory following the solution's per-state greedy actions."""
    env.reset()
    states = [env.state]
    actions = []
    rewards = []
    discounted = np.zeros(env.n_agents)
    undiscounted = np.zeros(env.n_agents)
    t = 0
    while True:
        action = solution.greedy_action[env.state]
        result = env.step(action)
        actions.append(action)
        rewards.append(result.rewards)
        discounted += solution.gamma**t * result.rewards
        undiscounted += result.rewards
        states.append(env.state)
        t += 1
        if result.terminal:
            break
    return RolloutResult(states, actions, rewards, discounted, undiscounted)


def export_solution(solution: OracleSolution, initial_state) -> str:
    """Plain-text export: per-state tensor blocks plus a one-line summary."""
    lines = [
        "oracle-solution 1",
        f"selector {solution.selector.value}",
        f"gamma {solution.gamma!r}",
        f"converged {str(solution.converged).lower()}",
    ]
    for s in solution.states:
        lines.append(f"state {s}")
        lines.append(solution.tensor(s).to_text().rstrip("\n"))
        if s in solution.optimal:
            joined = " ".join(str(a) for a in solution.optimal[s]) or "(none)"
            lines.append(f"optimal {joined}")
            lines.append(f"greedy {solution.greedy_action[s]}")
        else:
            lines.append("terminal")
    flat = solution.greedy_action.get(initial_state)
    lines.append(
        f"summary selector={solution.selector.value} iterations={solution.iterations} "
        f"residual={solution.residual!r} initial_state_action={flat}"
    )
    return "\n".join(lines) + "\n"
