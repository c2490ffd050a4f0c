"""Factored Bernoulli beliefs over ground atoms and attempt-style updates.

A belief stores one marginal per atom and stands for the product distribution
over symbolic states. Attempting an action mixes the success branch (all
preconditions hold, effects applied) with the failure branch (state unchanged);
for a single attempt the resulting marginals have a closed form that needs no
enumeration of joint states.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping

import numpy as np

from .pddl import Action, AtomUniverse

BRUTE_FORCE_LIMIT = 20


class UniverseMismatchError(ValueError):
    pass


class BeliefState:
    """Per-atom marginals over a fixed :class:`AtomUniverse`.

    The probability vector is read-only; every operation returns a new belief.
    """

    __slots__ = ("probs", "universe")

    def __init__(self, probs, universe: AtomUniverse, *, check: bool = True):
        p = np.array(probs, dtype=np.float64)
        if check:
            if p.shape != (len(universe),):
                raise ValueError(f"expected {len(universe)} marginals, got shape {p.shape}")
            if not np.all((p >= 0.0) & (p <= 1.0)):
                raise ValueError("marginals must lie in [0, 1]")
        p.flags.writeable = False
        self.probs = p
        self.universe = universe

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, atom) -> float:
        if isinstance(atom, (int, np.integer)):
            return float(self.probs[atom])
        return float(self.probs[self.universe.id(atom)])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BeliefState)
            and self.universe == other.universe
            and np.array_equal(self.probs, other.probs)
        )

    def __repr__(self) -> str:
        nz = {str(self.universe.atoms[i]): round(float(v), 4) for i, v in enumerate(self.probs) if v}
        return f"BeliefState({nz})"

    def replace(self, probs) -> "BeliefState":
        return BeliefState(probs, self.universe)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))

    def to_dict(self) -> dict[str, float]:
        return {str(self.universe.atoms[i]): float(v) for i, v in enumerate(self.probs) if v != 0.0}

    @classmethod
    def from_dict(cls, data: Mapping[str, float], universe: AtomUniverse) -> "BeliefState":
        p = np.zeros(len(universe))
        for name, v in data.items():
            v = float(v)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"probability of {name} out of range: {v}")
            p[universe.id(name)] = v
        return cls(p, universe)


def _same_universe(a: BeliefState, b: BeliefState) -> None:
    if a.universe is not b.universe and a.universe != b.universe:
        raise UniverseMismatchError("beliefs are over different atom universes")


def from_symbolic(state: Iterable[int], universe: AtomUniverse) -> BeliefState:
    p = np.zeros(len(universe))
    idx = list(state)
    if idx:
        if min(idx) < 0 or max(idx) >= len(universe):
            raise ValueError("state contains ids outside the universe")
        p[idx] = 1.0
    return BeliefState(p, universe, check=False)


def applicability(belief: BeliefState, action: Action) -> float:
    """Probability that every precondition holds: the product of their marginals."""
    if not action.pre:
        return 1.0
    return float(np.prod(belief.probs[sorted(action.pre)]))


def attempt_probs(probs: np.ndarray, action: Action, a: float | None = None) -> np.ndarray:
    """Marginals after attempting ``action``; ``probs`` is not modified."""
    if a is None:
        a = float(np.prod(probs[sorted(action.pre)])) if action.pre else 1.0
    out = probs.copy()
    if action.add:
        add = sorted(action.add)
        out[add] = a + (1.0 - a) * out[add]
    if action.delete:
        dele = sorted(action.delete)
        out[dele] = out[dele] - a
    return out


def apply_attempt(belief: BeliefState, action: Action) -> BeliefState:
    out = attempt_probs(belief.probs, action)
    # closure holds analytically because every deleted atom is a factor of the product
    assert np.all((out >= 0.0) & (out <= 1.0)), "attempt produced a marginal outside [0, 1]"
    return BeliefState(out, belief.universe, check=False)


def l1_distance(a: BeliefState, b: BeliefState) -> float:
    _same_universe(a, b)
    return float(np.abs(a.probs - b.probs).sum())


def goal_weights(goal: BeliefState, *, weighted: bool = False, positive_only: bool = False) -> np.ndarray:
    """Per-atom weights for goal matching.

    ``weighted`` scales each atom by the goal's confidence ``|2p - 1|``;
    ``positive_only`` ignores atoms the goal does not assert (``p <= 0.5``).
    """
    w = np.ones(len(goal))
    if weighted:
        w = np.abs(2.0 * goal.probs - 1.0)
    if positive_only:
        w = np.where(goal.probs > 0.5, w, 0.0)
    return w


def goal_distance(belief: BeliefState, goal: BeliefState, weights: np.ndarray | None = None) -> float:
    _same_universe(belief, goal)
    d = np.abs(belief.probs - goal.probs)
    return float(d.sum() if weights is None else (weights * d).sum())


def brute_force_attempt(belief: BeliefState, action: Action) -> np.ndarray:
    """Exact marginals after one attempt, by enumerating all ``2**n`` joint states.

    Each joint state carries the product-of-marginals weight; states that meet
    the precondition move to ``a(s)``, the rest stay put, and the mixture is
    marginalised per atom. Independent of :func:`apply_attempt`.
    """
    n = len(belief)
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"universe too large for enumeration ({n} > {BRUTE_FORCE_LIMIT} atoms)")
    p = belief.probs
    codes = np.arange(2**n, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)  # (2^n, n)
    weights = np.prod(np.where(bits, p, 1.0 - p), axis=1)
    pre = np.zeros(n, dtype=bool)
    pre[list(action.pre)] = True
    ok = np.all(bits[:, pre], axis=1)
    nxt = bits.copy()
    succ = nxt[ok]
    succ[:, list(action.delete)] = False
    succ[:, list(action.add)] = True
    nxt[ok] = succ
    return weights @ nxt.astype(np.float64)


def belief_to_json(belief: BeliefState) -> str:
    return json.dumps(belief.to_dict(), indent=2, sort_keys=True)


def belief_from_json(text: str, universe: AtomUniverse) -> BeliefState:
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("belief JSON must be an object mapping atom strings to probabilities")
    return BeliefState.from_dict(data, universe)
