"""Discretisation and rule-based rectification baselines, plus validity checkers."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..belief import BeliefState
from ..pddl import AtomUniverse


class WrongDomainError(ValueError):
    pass


def discretize_map(belief: BeliefState) -> frozenset[int]:
    """Most probable joint state under independence: threshold each marginal at 0.5.

    Exactly 0.5 maps to false.
    """
    return frozenset(np.flatnonzero(belief.probs > 0.5).tolist())


class _Blocks:
    def __init__(self, universe: AtomUniverse):
        need = {"on", "ontable", "clear", "holding", "handempty"}
        preds = {a.predicate for a in universe}
        if not need <= preds:
            raise WrongDomainError(f"not a blocksworld universe (missing {sorted(need - preds)})")
        self.blocks = sorted({a.args[0] for a in universe if a.predicate == "ontable"})
        self.on: dict[tuple[str, str], int] = {}
        self.ontable: dict[str, int] = {}
        self.clear: dict[str, int] = {}
        self.holding: dict[str, int] = {}
        self.handempty = -1
        for i, a in enumerate(universe):
            if a.predicate == "on":
                self.on[a.args] = i
            elif a.predicate == "ontable":
                self.ontable[a.args[0]] = i
            elif a.predicate == "clear":
                self.clear[a.args[0]] = i
            elif a.predicate == "holding":
                self.holding[a.args[0]] = i
            elif a.predicate == "handempty":
                self.handempty = i
        self.on_of = {i: xy for xy, i in self.on.items()}


@lru_cache(maxsize=64)
def _blocks(universe: AtomUniverse) -> _Blocks:
    return _Blocks(universe)


def blocksworld_rule_violations(state: frozenset[int], universe: AtomUniverse) -> list[str]:
    """Violations of the block-stacking rules: a block under another is not clear,
    each block has at most one block directly on it and sits on at most one block,
    and the gripper is either empty or holds exactly one otherwise-unplaced block."""
    bx = _blocks(universe)
    out = []
    ons = [bx.on_of[i] for i in state if i in bx.on_of]
    above: dict[str, list[str]] = {}
    below: dict[str, list[str]] = {}
    for x, y in ons:
        above.setdefault(y, []).append(x)
        below.setdefault(x, []).append(y)
        if bx.clear[y] in state:
            out.append(f"clear({y}) with on({x},{y})")
    out += [f"{y} has several blocks on it" for y, xs in sorted(above.items()) if len(xs) > 1]
    out += [f"{x} is on several blocks" for x, ys in sorted(below.items()) if len(ys) > 1]
    held = [b for b in bx.blocks if bx.holding[b] in state]
    he = bx.handempty in state
    if he + len(held) != 1:
        out.append("gripper must be empty or hold exactly one block")
    for b in held:
        if b in above or b in below or bx.ontable[b] in state or bx.clear[b] in state:
            out.append(f"held block {b} is also placed")
    return out


def is_valid_blocksworld(state: frozenset[int], universe: AtomUniverse) -> bool:
    """Full physical consistency: every block is held, on the table, or on exactly
    one block; clear iff unheld with nothing on top; no cycles."""
    if blocksworld_rule_violations(state, universe):
        return False
    bx = _blocks(universe)
    below = {}
    above = set()
    for i in state:
        if i in bx.on_of:
            x, y = bx.on_of[i]
            below[x] = y
            above.add(y)
    held = {b for b in bx.blocks if bx.holding[b] in state}
    for b in bx.blocks:
        if b in held:
            continue
        on_table = bx.ontable[b] in state
        if on_table == (b in below):
            return False
        if (bx.clear[b] in state) == (b in above):
            return False
    for b in bx.blocks:
        seen = set()
        while b in below:
            if b in seen:
                return False
            seen.add(b)
            b = below[b]
    return True


def rectify_blocksworld(state: frozenset[int], belief: BeliefState | None = None) -> frozenset[int]:
    """Repair a discretised blocksworld state into a valid one.

    Conflicts are resolved in favour of the more probable atom under ``belief``
    (atom order breaks ties). The gripper gets its most probable consistent
    reading; on-atoms are kept greedily by probability subject to one block
    above and below, no cycles, and not contradicting a more probable
    ``ontable``; support and clear atoms are then derived from the kept
    on-atoms, so a block under another is never clear.
    """
    if belief is None:
        raise TypeError("rectify_blocksworld needs the originating belief")
    universe = belief.universe
    bx = _blocks(universe)
    p = belief.probs

    def rank(ids):
        return sorted(ids, key=lambda i: (-p[i], i))

    hand_atoms = [bx.handempty] + [bx.holding[b] for b in bx.blocks]
    present = [i for i in hand_atoms if i in state]
    hand = present[0] if len(present) == 1 else rank(present or hand_atoms)[0]
    held = next((b for b in bx.blocks if bx.holding[b] == hand), None)

    below: dict[str, str] = {}
    above: dict[str, str] = {}
    kept = []
    for i in rank([i for i in state if i in bx.on_of]):
        x, y = bx.on_of[i]
        if held in (x, y) or x in below or y in above:
            continue
        t = bx.ontable[x]
        if t in state and p[t] > p[i]:
            continue
        z, cyc = y, False
        while z in below:
            z = below[z]
            if z == x:
                cyc = True
                break
        if cyc or y == x:
            continue
        below[x], above[y] = y, x
        kept.append(i)

    out = set(kept)
    out.add(hand)
    for b in bx.blocks:
        if b == held:
            continue
        if b not in below:
            out.add(bx.ontable[b])
        if b not in above:
            out.add(bx.clear[b])
    return frozenset(out)


@lru_cache(maxsize=64)
def _sorting_index(universe: AtomUniverse) -> dict[str, list[int]]:
    preds = {a.predicate for a in universe}
    if preds != {"at"}:
        raise WrongDomainError("not a sorting universe (expected only at/2 atoms)")
    by_item: dict[str, list[int]] = {}
    for i, a in enumerate(universe):
        by_item.setdefault(a.args[0], []).append(i)
    return by_item


def rectify_sorting(belief: BeliefState) -> frozenset[int]:
    """Place every item at its single most probable location (first atom on ties)."""
    by_item = _sorting_index(belief.universe)
    p = belief.probs
    return frozenset(max(ids, key=lambda i: (p[i], -i)) for ids in by_item.values())


def is_valid_sorting(state: frozenset[int], universe: AtomUniverse) -> bool:
    by_item = _sorting_index(universe)
    return all(sum(i in state for i in ids) == 1 for ids in by_item.values())


def rectify(state: frozenset[int], belief: BeliefState, domain: str) -> frozenset[int]:
    if domain == "stacking":
        return rectify_blocksworld(state, belief)
    if domain == "sorting":
        return rectify_sorting(belief)
    raise WrongDomainError(f"no rectification rules for domain {domain!r}")

