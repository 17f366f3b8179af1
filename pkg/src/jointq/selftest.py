"""Runtime property suites and the brute-force references they check against.

The reference implementations here are deliberately plain double/triple
loops over scalar tensor entries, independent of the vectorized routes in
:mod:`jointq.selectors`, so the two can serve as mutual checks.  The suite
functions are executed both by ``jointq selftest`` and by the test suite.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from jointq.selectors import (
    JointAction,
    PayoffTensor,
    enumerate_nash,
    is_nash,
    max_component_sets,
    maximin_component_sets,
)

# Upper critical values of the chi-squared distribution at significance 1e-3,
# keyed by degrees of freedom; enough for the action/buffer sizes used here.
_CHI2_CRIT_1E3 = {
    1: 10.828,
    2: 13.816,
    3: 16.266,
    5: 20.515,
    7: 24.322,
    15: 37.697,
    24: 51.179,
    31: 62.487,
}


def chi_squared_uniform_ok(counts, alpha: float = 1e-3) -> bool:
    """True when the count vector is consistent with a uniform draw.

    Compares the chi-squared statistic against the critical value at the
    given significance; only ``alpha=1e-3`` is tabulated.
    """
    if alpha != 1e-3:
        raise ValueError("only significance 1e-3 is tabulated")
    counts = np.asarray(counts, dtype=np.float64)
    df = counts.size - 1
    if df not in _CHI2_CRIT_1E3:
        raise ValueError(f"no tabulated critical value for {df} degrees of freedom")
    expected = counts.sum() / counts.size
    stat = float(((counts - expected) ** 2 / expected).sum())
    return stat <= _CHI2_CRIT_1E3[df]


def brute_max_components(q: PayoffTensor) -> list[tuple[int, ...]]:
    """Per agent, the set of own components among its best joint actions (plain loops)."""
    out = []
    for i in range(q.n_agents):
        best = None
        comps: set[int] = set()
        for a in q.joint_actions():
            v = q.value(i, a)
            if best is None or v > best:
                best = v
                comps = {a[i]}
            elif v == best:
                comps.add(a[i])
        out.append(tuple(sorted(comps)))
    return out


def brute_maximin_components(q: PayoffTensor) -> list[tuple[int, ...]]:
    """Per agent, the own actions with the best worst-case value (double loop)."""
    out = []
    for i in range(q.n_agents):
        opponents = [range(k) for j, k in enumerate(q.action_counts) if j != i]
        worst = []
        for own in range(q.action_counts[i]):
            lows = []
            for rest in itertools.product(*opponents):
                a = rest[:i] + (own,) + rest[i:]
                lows.append(q.value(i, a))
            worst.append(min(lows))
        top = max(worst)
        out.append(tuple(j for j, w in enumerate(worst) if w == top))
    return out


def brute_nash(q: PayoffTensor) -> list[JointAction]:
    """All pure equilibria by explicit unilateral-deviation checks."""
    found = []
    for a in q.joint_actions():
        ok = True
        for i in range(q.n_agents):
            for dev in range(q.action_counts[i]):
                b = a[:i] + (dev,) + a[i + 1 :]
                if q.value(i, b) > q.value(i, a):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            found.append(a)
    return found


def random_tensor(rng: np.random.Generator, integer_valued: bool = False) -> PayoffTensor:
    """A random 2-3 agent tensor with 2-4 actions per agent.

    ``integer_valued`` draws small integers so ties actually occur.
    """
    n = int(rng.integers(2, 4))
    counts = tuple(int(rng.integers(2, 5)) for _ in range(n))
    if integer_valued:
        vals = rng.integers(-3, 4, size=(n, *counts)).astype(np.float64)
    else:
        vals = rng.standard_normal((n, *counts))
    return PayoffTensor(vals)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _run(name: str, fn) -> SuiteResult:
    start = time.perf_counter()
    passed, detail = fn()
    return SuiteResult(name, passed, detail, time.perf_counter() - start)


def suite_selector_agreement(samples: int = 1000, seed: int = 0) -> SuiteResult:
    """Vectorized selectors agree with the brute-force loops on random tensors."""

    def body():
        rng = np.random.default_rng(seed)
        for idx in range(samples):
            q = random_tensor(rng, integer_valued=idx % 2 == 0)
            nash = set(enumerate_nash(q))
            if nash != set(brute_nash(q)):
                return False, f"nash set mismatch on sample {idx}"
            for a in q.joint_actions():
                if is_nash(q, a) != (a in nash):
                    return False, f"is_nash disagrees with enumeration on sample {idx}"
            if maximin_component_sets(q) != brute_maximin_components(q):
                return False, f"maximin mismatch on sample {idx}"
            if max_component_sets(q) != brute_max_components(q):
                return False, f"max mismatch on sample {idx}"
        return True, f"{samples} random tensors, exact agreement"

    return _run("selector-agreement", body)


def suite_affine_invariance(samples: int = 200, seed: int = 1) -> SuiteResult:
    """Scaling/shifting one agent's values leaves all optimal-action sets unchanged."""

    def body():
        from jointq.selectors import SelectorKind, optimal_action_set

        rng = np.random.default_rng(seed)
        for idx in range(samples):
            q = random_tensor(rng, integer_valued=idx % 2 == 0)
            agent = int(rng.integers(q.n_agents))
            alpha = float(rng.uniform(0.1, 3.0))
            beta = float(rng.uniform(-5.0, 5.0))
            scaled_vals = q.values.copy()
            scaled_vals[agent] = alpha * scaled_vals[agent] + beta
            scaled = PayoffTensor(scaled_vals)
            for kind in SelectorKind:
                before = set(optimal_action_set(q, kind))
                after = set(optimal_action_set(scaled, kind))
                if before != after:
                    return False, f"{kind.value} set changed under affine map on sample {idx}"
        return True, f"{samples} random tensors, sets invariant"

    return _run("affine-invariance", body)


def suite_gradient_check(count: int = 100, seed: int = 2) -> SuiteResult:
    """Analytic gradients match central finite differences on random nets."""

    def body():
        from jointq.nets import max_gradient_error

        err = max_gradient_error(count=count, seed=seed)
        return err < 1e-4, f"max relative error {err:.3e} over {count} nets"

    return _run("gradient-check", body)


def suite_dueling_identity(count: int = 1000, seed: int = 3) -> SuiteResult:
    """Advantages are mean-centered: mean over actions of (Q - V) is zero."""

    def body():
        from jointq.nets import max_dueling_residual

        res = max_dueling_residual(count=count, seed=seed)
        return res < 1e-9, f"max |mean(Q - V)| = {res:.3e} over {count} nets"

    return _run("dueling-identity", body)


def suite_replay_uniformity(draws: int = 10_000, seed: int = 4) -> SuiteResult:
    """Single-item samples from a small buffer look uniform (chi-squared, 1e-3)."""

    def body():
        from jointq.replay import ReplayBuffer, Transition

        rng = np.random.default_rng(seed)
        buf = ReplayBuffer(capacity=8, min_fill=0)
        for k in range(4):
            buf.push(
                Transition(
                    state=np.array([float(k)]),
                    next_state=np.array([float(k)]),
                    action=(0, 0),
                    rewards=np.zeros(2),
                    terminal=False,
                )
            )
        counts = np.zeros(4)
        for _ in range(draws):
            (t,) = buf.sample(1, rng)
            counts[int(t.state[0])] += 1
        ok = chi_squared_uniform_ok(counts)
        return ok, f"counts {counts.astype(int).tolist()} over {draws} draws"

    return _run("replay-uniformity", body)


def run_all(verbose: bool = True) -> bool:
    """Execute every suite; print one line per suite; True when all pass."""
    results = [
        suite_selector_agreement(),
        suite_affine_invariance(),
        suite_gradient_check(),
        suite_dueling_identity(),
        suite_replay_uniformity(),
    ]
    ok = True
    for r in results:
        ok &= r.passed
        if verbose:
            status = "PASS" if r.passed else "FAIL"
            print(f"[{status}] {r.name}: {r.detail} ({r.seconds:.2f}s)")
    return ok
