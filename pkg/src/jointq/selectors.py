"""Game-theoretic action selection over a payoff tensor.

A :class:`PayoffTensor` holds one real value per (agent, joint action) pair,
i.e. the per-agent rewards of a normal-form stage game, or the per-agent
Q-values predicted by a stack of networks at a single state.  The selectors
in this module map such a tensor to one joint action:

* :func:`select_max` -- each agent contributes its own component of the joint
  action that maximizes its own values.
* :func:`select_nash` -- a uniformly random pure Nash equilibrium, falling
  back to the maximin action when no pure equilibrium exists.
* :func:`select_maximin` -- per agent, the action maximizing its worst-case
  value over all opponent combinations.

All tie-breaking is uniform-random over the tied set via the injected
``rng`` (a ``numpy.random.Generator``); every function here is pure given
(tensor, rng).
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

JointAction = tuple[int, ...]


class SelectorKind(enum.Enum):
    """Which rule maps a payoff tensor to a joint action."""

    MAX = "max"
    NASH = "nash"
    MAXIMIN = "maximin"


@dataclass(frozen=True, eq=False)
class PayoffTensor:
    """Per-agent values over all joint actions.

    ``values`` has shape ``(n_agents, k_1, ..., k_n)`` where ``k_i`` is the
    size of agent i's action set.  ``values[i][a]`` is agent i's value at
    joint action ``a``.  All entries must be finite.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim < 3:
            raise ValueError(
                f"payoff tensor needs shape (n, k1, ..., kn) with n >= 2 agents, got {arr.shape}"
            )
        n = arr.shape[0]
        if n != arr.ndim - 1:
            raise ValueError(
                f"agent axis ({n}) does not match number of action axes ({arr.ndim - 1})"
            )
        if any(k < 1 for k in arr.shape[1:]):
            raise ValueError(f"every agent needs at least one action, got sizes {arr.shape[1:]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("payoff tensor contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    @property
    def joint_action_count(self) -> int:
        return int(np.prod(self.action_counts))

    def joint_actions(self):
        """Iterate all joint actions in row-major (last agent fastest) order."""
        return itertools.product(*(range(k) for k in self.action_counts))

    def value(self, agent: int, action: JointAction) -> float:
        self.check_action(action)
        return float(self.values[(agent, *action)])

    def check_action(self, action: JointAction) -> None:
        if len(action) != self.n_agents:
            raise ValueError(f"joint action {action} has wrong length for {self.n_agents} agents")
        for i, (a, k) in enumerate(zip(action, self.action_counts)):
            if not 0 <= a < k:
                raise ValueError(f"component {i} of joint action {action} out of range [0, {k})")

    def flat_index(self, action: JointAction) -> int:
        """Row-major flat index of a joint action, matching :meth:`joint_actions` order."""
        self.check_action(action)
        return int(np.ravel_multi_index(action, self.action_counts))

    def to_text(self) -> str:
        """Serialize: header ``n k1 ... kn``, then one row-major value line per agent."""
        header = " ".join(str(x) for x in (self.n_agents, *self.action_counts))
        rows = [
            " ".join(repr(float(v)) for v in self.values[i].reshape(-1))
            for i in range(self.n_agents)
        ]
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PayoffTensor":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty payoff tensor text")
        head = [int(tok) for tok in lines[0].split()]
        n, counts = head[0], tuple(head[1:])
        if len(counts) != n:
            raise ValueError(f"header lists {len(counts)} action counts for {n} agents")
        if len(lines) != 1 + n:
            raise ValueError(f"expected {n} value lines, got {len(lines) - 1}")
        per_agent = np.prod(counts)
        rows = []
        for ln in lines[1:]:
            vals = [float(tok) for tok in ln.split()]
            if len(vals) != per_agent:
                raise ValueError(f"value line has {len(vals)} entries, expected {per_agent}")
            rows.append(np.asarray(vals).reshape(counts))
        return cls(np.stack(rows))

    @classmethod
    def from_per_agent_rows(cls, action_counts, rows) -> "PayoffTensor":
        """Build from one row-major value sequence per agent."""
        counts = tuple(action_counts)
        stacked = np.stack([np.asarray(r, dtype=np.float64).reshape(counts) for r in rows])
        return cls(stacked)


def _uniform_choice(candidates: list[JointAction], rng: np.random.Generator) -> JointAction:
    return candidates[int(rng.integers(len(candidates)))]


def _own_axis_max(values_i: np.ndarray, agent: int) -> np.ndarray:
    """Max of agent i's values over its own action axis, broadcast back."""
    return values_i.max(axis=agent, keepdims=True)


def max_component_sets(q: PayoffTensor) -> list[tuple[int, ...]]:
    """Per agent, the i-th components of that agent's argmax joint actions."""
    sets = []
    for i in range(q.n_agents):
        vals = q.values[i]
        best = np.argwhere(vals == vals.max())
        sets.append(tuple(sorted({int(row[i]) for row in best})))
    return sets


def select_max(q: PayoffTensor, rng: np.random.Generator) -> JointAction:
    """Each agent's component of its own full-tensor argmax joint action.

    Per-agent argmax ties are broken uniformly at random: a tied argmax joint
    action is drawn for each agent and its i-th component is kept.
    """
    components = []
    for i in range(q.n_agents):
        vals = q.values[i]
        best = [tuple(int(x) for x in row) for row in np.argwhere(vals == vals.max())]
        components.append(_uniform_choice(best, rng)[i])
    return tuple(components)


def is_nash(q: PayoffTensor, a: JointAction) -> bool:
    """True iff no unilateral deviation strictly improves any agent (weak inequality)."""
    q.check_action(a)
    for i in range(q.n_agents):
        vals = q.values[i]
        fixed_others = tuple(0 if j == i else c for j, c in enumerate(a))
        if vals[a] < _own_axis_max(vals, i)[fixed_others]:
            return False
    return True


def enumerate_nash(q: PayoffTensor) -> list[JointAction]:
    """All pure Nash equilibria of the tensor, sorted; may be empty.

    A joint action is an equilibrium when, for every agent, its value there
    equals the best it could get by deviating alone.
    """
    mask = np.ones(q.action_counts, dtype=bool)
    for i in range(q.n_agents):
        vals = q.values[i]
        mask &= vals == _own_axis_max(vals, i)
    return [tuple(int(x) for x in idx) for idx in np.argwhere(mask)]


def maximin_component_sets(q: PayoffTensor) -> list[tuple[int, ...]]:
    """Per agent, all own actions maximizing the worst case over opponents."""
    sets = []
    for i in range(q.n_agents):
        vals = q.values[i]
        other_axes = tuple(ax for ax in range(vals.ndim) if ax != i)
        worst = vals.min(axis=other_axes) if other_axes else vals
        sets.append(tuple(int(j) for j in np.flatnonzero(worst == worst.max())))
    return sets


def select_maximin(q: PayoffTensor, rng: np.random.Generator) -> JointAction:
    """Per agent, the own action maximizing the minimum over opponent combinations."""
    components = []
    for best in maximin_component_sets(q):
        components.append(best[int(rng.integers(len(best)))])
    return tuple(components)


def select_nash(q: PayoffTensor, rng: np.random.Generator) -> tuple[JointAction, bool]:
    """A uniformly random pure Nash equilibrium and a fallback flag.

    When the tensor has no pure equilibrium the maximin action is returned
    instead and the flag is True, so callers can count how often the
    guarantee-preserving substitute was used.
    """
    equilibria = enumerate_nash(q)
    if equilibria:
        return _uniform_choice(equilibria, rng), False
    return select_maximin(q, rng), True


def select_action(
    q: PayoffTensor, kind: SelectorKind, rng: np.random.Generator
) -> tuple[JointAction, bool]:
    """Dispatch to the selector; the flag is True only for a Nash fallback."""
    if kind is SelectorKind.MAX:
        return select_max(q, rng), False
    if kind is SelectorKind.MAXIMIN:
        return select_maximin(q, rng), False
    return select_nash(q, rng)


def select_actions_batch(
    values: np.ndarray, kind: SelectorKind, rng: np.random.Generator
) -> tuple[np.ndarray, int]:
    """Apply the selector to a stack of tensors at once.

    ``values`` has shape (batch, n_agents, k_1, ..., k_n).  Returns the flat
    row-major joint-action index per batch row and the number of rows that
    needed the empty-Nash maximin fallback.  Rows with value ties take the
    per-row uniform tie-break; tie-free rows run fully vectorized.
    """
    if values.ndim < 4:
        raise ValueError(f"expected (batch, n, k1, ..., kn) values, got shape {values.shape}")
    batch, n = values.shape[:2]
    counts = values.shape[2:]
    flat_vals = values.reshape(batch, n, -1)
    fallbacks = 0

    if kind is SelectorKind.NASH:
        mask = np.ones((batch, *counts), dtype=bool)
        for i in range(n):
            vi = values[:, i]
            mask &= vi == vi.max(axis=1 + i, keepdims=True)
        flat_mask = mask.reshape(batch, -1)
        n_equilibria = flat_mask.sum(axis=1)
        chosen = flat_mask.argmax(axis=1)
        for b in np.flatnonzero(n_equilibria > 1):
            options = np.flatnonzero(flat_mask[b])
            chosen[b] = options[int(rng.integers(len(options)))]
        for b in np.flatnonzero(n_equilibria == 0):
            fallbacks += 1
            action = select_maximin(PayoffTensor(values[b]), rng)
            chosen[b] = int(np.ravel_multi_index(action, counts))
        return chosen.astype(np.intp), fallbacks

    components = np.empty((batch, n), dtype=np.intp)
    for i in range(n):
        if kind is SelectorKind.MAX:
            scores = flat_vals[:, i, :]
            own = np.unravel_index(np.arange(scores.shape[1]), counts)[i]
        else:
            other_axes = tuple(1 + j for j in range(n) if j != i)
            scores = values[:, i].min(axis=other_axes)  # (batch, k_i)
            own = np.arange(counts[i])
        top = scores.max(axis=1, keepdims=True)
        at_top = scores == top
        components[:, i] = own[scores.argmax(axis=1)]
        for b in np.flatnonzero(at_top.sum(axis=1) > 1):
            tied = np.flatnonzero(at_top[b])
            components[b, i] = own[tied[int(rng.integers(len(tied)))]]
    flat = np.ravel_multi_index(tuple(components.T), counts)
    return flat.astype(np.intp), 0


def optimal_action_set(q: PayoffTensor, kind: SelectorKind) -> tuple[JointAction, ...]:
    """Every joint action the selector could return, sorted.

    For Max and Maximin this is the product of the per-agent tied component
    sets; for Nash it is the (possibly empty) set of pure equilibria, without
    the fallback.
    """
    if kind is SelectorKind.NASH:
        return tuple(enumerate_nash(q))
    sets = max_component_sets(q) if kind is SelectorKind.MAX else maximin_component_sets(q)
    return tuple(itertools.product(*sets))
