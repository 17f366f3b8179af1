"""Per-agent dueling feed-forward networks with hand-derived gradients.

A network maps a state vector to one Q-value per joint action through a
rectified-linear trunk and two linear heads: a scalar state value V(s) and a
vector of advantages A(s, a).  The heads combine as

    Q(s, a) = V(s) + A(s, a) - mean_a A(s, a)

so the decomposition is identifiable (the advantages are mean-centered).
Everything runs in double precision; gradients of the squared-error training
loss are computed exactly by backpropagation and are verified against
central finite differences in the test and selftest suites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingError(RuntimeError):
    """Raised when training produces non-finite numbers."""


@dataclass(eq=False)
class DuelingNetwork:
    """Value-object container for all parameters of one agent's network.

    ``layer_sizes`` lists the input dimension followed by the trunk widths;
    both heads attach to the last trunk layer (or directly to the input when
    no hidden layers are configured).
    """

    layer_sizes: tuple[int, ...]
    joint_action_count: int
    weights: list[np.ndarray] = field(repr=False)  # trunk, each (out, in)
    biases: list[np.ndarray] = field(repr=False)
    v_weight: np.ndarray = field(repr=False)  # (1, last)
    v_bias: np.ndarray = field(repr=False)  # (1,)
    a_weight: np.ndarray = field(repr=False)  # (K, last)
    a_bias: np.ndarray = field(repr=False)  # (K,)

    @property
    def state_dim(self) -> int:
        return self.layer_sizes[0]

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in declaration order (trunk pairs, V head, A head)."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        out.extend((self.v_weight, self.v_bias, self.a_weight, self.a_bias))
        return out


@dataclass(eq=False)
class NetworkGradients:
    """Gradient arrays mirroring :meth:`DuelingNetwork.parameters` order."""

    arrays: list[np.ndarray]


@dataclass(eq=False)
class OptimizerState:
    """Adaptive-moment accumulators for one network's parameters."""

    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float
    step: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]


def _glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_network(layer_sizes, joint_action_count: int, seed: int) -> DuelingNetwork:
    """Build a network with scaled-uniform weights and zero biases, deterministically."""
    sizes = tuple(int(s) for s in layer_sizes)
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must all be >= 1, got {sizes}")
    if joint_action_count < 1:
        raise ValueError(f"joint_action_count must be >= 1, got {joint_action_count}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(_glorot_uniform(rng, fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    last = sizes[-1]
    return DuelingNetwork(
        layer_sizes=sizes,
        joint_action_count=joint_action_count,
        weights=weights,
        biases=biases,
        v_weight=_glorot_uniform(rng, 1, last),
        v_bias=np.zeros(1),
        a_weight=_glorot_uniform(rng, joint_action_count, last),
        a_bias=np.zeros(joint_action_count),
    )


def _as_batch(net: DuelingNetwork, states: np.ndarray) -> np.ndarray:
    arr = np.asarray(states, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.state_dim:
        raise ValueError(f"states have shape {np.shape(states)}, expected (*, {net.state_dim})")
    return arr


def _forward_cached(net: DuelingNetwork, states: np.ndarray):
    """Forward pass keeping the per-layer activations needed for backprop."""
    x = _as_batch(net, states)
    hidden = [x]
    pre = []
    h = x
    for w, b in zip(net.weights, net.biases):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        hidden.append(h)
    v = h @ net.v_weight.T + net.v_bias  # (B, 1)
    a = h @ net.a_weight.T + net.a_bias  # (B, K)
    q = v + a - a.mean(axis=1, keepdims=True)
    return q, v, hidden, pre


def forward_batch(net: DuelingNetwork, states: np.ndarray) -> np.ndarray:
    """Q-values for a batch of states, shape (batch, joint_action_count)."""
    q, _, _, _ = _forward_cached(net, states)
    return q


def forward(net: DuelingNetwork, state: np.ndarray) -> np.ndarray:
    """Q-values over all joint actions for one state."""
    state = np.asarray(state, dtype=np.float64)
    if state.ndim != 1:
        raise ValueError(f"state must be a vector, got shape {state.shape}")
    return forward_batch(net, state)[0]


def state_value(net: DuelingNetwork, state: np.ndarray) -> float:
    """The V(s) head alone; equals the mean of the Q-values by construction."""
    _, v, _, _ = _forward_cached(net, np.asarray(state, dtype=np.float64))
    return float(v[0, 0])


def batch_loss(
    net: DuelingNetwork, states, action_indices, targets
) -> float:
    """Mean squared error between Q(s)[a] and the target, over the batch."""
    q = forward_batch(net, states)
    idx = np.asarray(action_indices, dtype=np.intp)
    y = np.asarray(targets, dtype=np.float64)
    picked = q[np.arange(len(idx)), idx]
    return float(np.mean((picked - y) ** 2))


def gradient(
    net: DuelingNetwork, states, action_indices, targets
) -> tuple[NetworkGradients, float]:
    """Exact loss gradient for a batch, plus the loss value.

    The loss is the mean over the batch of the squared error between the
    network's Q-value at the taken joint action and the given target.
    Returned gradient arrays mirror :meth:`DuelingNetwork.parameters`.

    Args:
        states: (batch, state_dim) state vectors.
        action_indices: flat joint-action index per batch item.
        targets: regression target per batch item.
    """
    x = _as_batch(net, states)
    idx = np.asarray(action_indices, dtype=np.intp)
    y = np.asarray(targets, dtype=np.float64)
    if not (len(x) == len(idx) == len(y)) or len(x) == 0:
        raise ValueError("states, action_indices and targets need equal nonzero lengths")
    if idx.min() < 0 or idx.max() >= net.joint_action_count:
        raise ValueError("action index out of range")

    q, _, hidden, pre = _forward_cached(net, x)
    batch = len(x)
    k = net.joint_action_count
    picked = q[np.arange(batch), idx]
    loss = float(np.mean((picked - y) ** 2))

    # d(loss)/dQ[b, a_b], all other Q entries unused by the loss
    g = 2.0 * (picked - y) / batch  # (B,)

    # Q = V + A - mean(A):  dQ[a]/dV = 1,  dQ[a]/dA_j = 1[j == a] - 1/K
    d_v = g[:, None]  # (B, 1)
    d_a = np.full((batch, k), -1.0 / k) * g[:, None]
    d_a[np.arange(batch), idx] += g

    h_last = hidden[-1]
    gv_w = d_v.T @ h_last
    gv_b = d_v.sum(axis=0)
    ga_w = d_a.T @ h_last
    ga_b = d_a.sum(axis=0)

    d_h = d_v @ net.v_weight + d_a @ net.a_weight
    g_weights: list[np.ndarray] = []
    g_biases: list[np.ndarray] = []
    for layer in range(len(net.weights) - 1, -1, -1):
        d_z = d_h * (pre[layer] > 0.0)
        g_weights.append(d_z.T @ hidden[layer])
        g_biases.append(d_z.sum(axis=0))
        d_h = d_z @ net.weights[layer]

    arrays: list[np.ndarray] = []
    for gw, gb in zip(reversed(g_weights), reversed(g_biases)):
        arrays.extend((gw, gb))
    arrays.extend((gv_w, gv_b, ga_w, ga_b))
    return NetworkGradients(arrays), loss


def init_optimizer(
    net: DuelingNetwork,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> OptimizerState:
    params = net.parameters()
    return OptimizerState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        step=0,
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
    )


def adam_update(
    params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState
) -> None:
    """One adaptive-moment step with bias correction, updating params in place."""
    if len(params) != len(state.first_moment):
        raise ValueError("optimizer state does not match parameter count")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def optimizer_step(
    net: DuelingNetwork, grads: NetworkGradients, opt_state: OptimizerState
) -> tuple[DuelingNetwork, OptimizerState]:
    """Apply one optimizer update to the network's parameters (mutates both args)."""
    adam_update(net.parameters(), grads.arrays, opt_state)
    return net, opt_state


def clone_parameters(src: DuelingNetwork) -> DuelingNetwork:
    """Value-identical, storage-independent copy."""
    return DuelingNetwork(
        layer_sizes=src.layer_sizes,
        joint_action_count=src.joint_action_count,
        weights=[w.copy() for w in src.weights],
        biases=[b.copy() for b in src.biases],
        v_weight=src.v_weight.copy(),
        v_bias=src.v_bias.copy(),
        a_weight=src.a_weight.copy(),
        a_bias=src.a_bias.copy(),
    )


CHECKPOINT_HEADER = "jointq-network 1"


def _param_items(net: DuelingNetwork) -> list[tuple[str, np.ndarray]]:
    items = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        items.append((f"trunk_w{i}", w))
        items.append((f"trunk_b{i}", b))
    items += [
        ("v_weight", net.v_weight),
        ("v_bias", net.v_bias),
        ("a_weight", net.a_weight),
        ("a_bias", net.a_bias),
    ]
    return items


def save_network(net: DuelingNetwork, path) -> None:
    """Write the documented text checkpoint: header, sizes, then parameters.

    Values are written with shortest round-trip decimal representation, so a
    load reproduces the parameters bit-exactly.
    """
    lines = [
        CHECKPOINT_HEADER,
        "layer_sizes " + " ".join(str(s) for s in net.layer_sizes),
        f"joint_actions {net.joint_action_count}",
    ]
    for name, arr in _param_items(net):
        shape = " ".join(str(d) for d in arr.shape)
        lines.append(f"param {name} {shape}")
        lines.append(" ".join(repr(float(v)) for v in arr.reshape(-1)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> DuelingNetwork:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"not a network checkpoint (expected header '{CHECKPOINT_HEADER}')")
    sizes = tuple(int(tok) for tok in lines[1].split()[1:])
    k = int(lines[2].split()[1])
    net = init_network(sizes, k, seed=0)
    cursor = 3
    for name, arr in _param_items(net):
        tag, got_name, *shape_tokens = lines[cursor].split()
        if tag != "param" or got_name != name:
            raise ValueError(f"checkpoint out of order at line {cursor + 1}: expected {name}")
        shape = tuple(int(t) for t in shape_tokens)
        if shape != arr.shape:
            raise ValueError(f"{name} has shape {shape} in file, expected {arr.shape}")
        values = np.array([float(tok) for tok in lines[cursor + 1].split()])
        arr[...] = values.reshape(shape)
        cursor += 2
    return net


def max_dueling_residual(count: int = 1000, seed: int = 3) -> float:
    """Max over random nets/states of |mean_a Q(s, a) - V(s)|."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        sizes = [int(rng.integers(1, 6)) for _ in range(int(rng.integers(1, 4)))]
        k = int(rng.integers(1, 8))
        net = init_network(sizes, k, seed=int(rng.integers(2**31)))
        state = rng.standard_normal(sizes[0])
        q = forward(net, state)
        worst = max(worst, abs(float(q.mean()) - state_value(net, state)))
    return worst


def _near_relu_kink(net: DuelingNetwork, states: np.ndarray, margin: float) -> bool:
    _, _, _, pre = _forward_cached(net, states)
    return any(np.abs(z).min() < margin for z in pre if z.size)


def max_gradient_error(count: int = 100, seed: int = 2, step: float = 1e-5) -> float:
    """Max relative error of analytic gradients vs central differences.

    Uses small random architectures and batches; the relative error of an
    entry is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    Central differences are only meaningful away from the rectifier kinks
    (zero biases make exact-zero pre-activations reachable), so states that
    leave any trunk unit within the perturbation's reach of zero are redrawn.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        sizes = [int(rng.integers(2, 5)), int(rng.integers(3, 9))]
        if rng.random() < 0.5:
            sizes.append(int(rng.integers(3, 7)))
        k = int(rng.integers(2, 7))
        net = init_network(sizes, k, seed=int(rng.integers(2**31)))
        batch = int(rng.integers(1, 6))
        states = rng.standard_normal((batch, sizes[0]))
        while _near_relu_kink(net, states, margin=1e-2):
            states = rng.standard_normal((batch, sizes[0]))
        actions = rng.integers(0, k, size=batch)
        targets = rng.standard_normal(batch)

        grads, _ = gradient(net, states, actions, targets)
        for param, analytic in zip(net.parameters(), grads.arrays):
            flat = param.reshape(-1)
            for j in range(flat.size):
                keep = flat[j]
                flat[j] = keep + step
                up = batch_loss(net, states, actions, targets)
                flat[j] = keep - step
                down = batch_loss(net, states, actions, targets)
                flat[j] = keep
                numeric = (up - down) / (2.0 * step)
                a = float(analytic.reshape(-1)[j])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
                worst = max(worst, err)
    return worst
