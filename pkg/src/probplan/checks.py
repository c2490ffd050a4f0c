"""Randomized cross-checks of the factored belief update against exact enumeration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import BeliefState, attempt_probs, brute_force_attempt
from .pddl import Action, AtomUniverse, GroundAtom


def random_universe(n: int) -> AtomUniverse:
    return AtomUniverse(GroundAtom(f"p{i:02d}", ()) for i in range(n))


def random_action(rng: np.random.Generator, n: int) -> Action:
    """A random operator honouring delete-within-precondition and disjoint adds."""
    ids = rng.permutation(n)
    k_pre = int(rng.integers(0, min(n, 4) + 1))
    pre = ids[:k_pre]
    rest = ids[k_pre:]
    k_add = int(rng.integers(0, min(len(rest), 3) + 1))
    add = rest[:k_add]
    dele = pre[rng.random(k_pre) < 0.5]
    return Action("act", (), frozenset(pre.tolist()), frozenset(add.tolist()), frozenset(dele.tolist()))


def random_belief(rng: np.random.Generator, universe: AtomUniverse) -> BeliefState:
    """Uniform marginals with a share of exact zeros and ones mixed in."""
    n = len(universe)
    p = rng.random(n)
    kind = rng.random(n)
    p[kind < 0.1] = 0.0
    p[(kind >= 0.1) & (kind < 0.2)] = 1.0
    return BeliefState(p, universe)


def random_case(rng: np.random.Generator, max_atoms: int = 12) -> tuple[BeliefState, Action]:
    n = int(rng.integers(1, max_atoms + 1))
    u = random_universe(n)
    return random_belief(rng, u), random_action(rng, n)


@dataclass
class OracleCheckReport:
    trials: int
    max_error: float
    out_of_range: int

    def ok(self, tol: float = 1e-12) -> bool:
        return self.max_error <= tol and self.out_of_range == 0


def oracle_check(trials: int = 10_000, max_atoms: int = 12, seed: int = 0) -> OracleCheckReport:
    """Compare factored attempts against 2^n enumeration on random cases."""
    rng = np.random.default_rng(seed)
    worst, bad = 0.0, 0
    for _ in range(trials):
        b, a = random_case(rng, max_atoms)
        fast = attempt_probs(b.probs, a)
        exact = brute_force_attempt(b, a)
        worst = max(worst, float(np.max(np.abs(fast - exact))))
        bad += int(np.any((fast < 0.0) | (fast > 1.0)))
    return OracleCheckReport(trials, worst, bad)
