"""Forward best-first search over beliefs and over discrete states."""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..belief import BeliefState, UniverseMismatchError, attempt_probs, goal_weights
from ..pddl import Action, AtomUniverse

MATCHED = "matched"
BUDGET_EXHAUSTED = "budget_exhausted"
NO_IMPROVEMENT = "no_improvement"


@dataclass(frozen=True)
class SearchConfig:
    max_depth: int = 40
    node_budget: int = 20_000
    applicability_floor: float = 1e-3
    goal_tolerance: float | None = None  # None: 0.01 per goal-asserted atom
    weighted_goal: bool = False
    positive_only: bool = False
    # belief search stops after this many expansions without a better incumbent
    patience: int | None = 3_000

    def __post_init__(self):
        if not 0.0 <= self.applicability_floor <= 1.0:
            raise ValueError("applicability_floor must lie in [0, 1]")
        if self.goal_tolerance is not None and self.goal_tolerance < 0:
            raise ValueError("goal_tolerance must be non-negative")
        if self.max_depth < 1 or self.node_budget < 1:
            raise ValueError("budgets must be at least 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be at least 1")

    def with_(self, **kw) -> "SearchConfig":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d)


@dataclass
class PlanResult:
    plan: list[Action]
    final_belief_distance: float
    status: str
    initial_distance: float = 0.0
    expansions: int = 0

    @property
    def matched(self) -> bool:
        return self.status == MATCHED

    def to_dict(self) -> dict:
        return {
            "plan": [str(a) for a in self.plan],
            "status": self.status,
            "initial_distance": self.initial_distance,
            "final_distance": self.final_belief_distance,
            "expansions": self.expansions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def plan_to_json(plan: Sequence[Action]) -> str:
    return json.dumps([str(a) for a in plan])


class _ActionTable:
    """Padded index matrices for vectorised applicability and distance deltas.

    Padding points at an extra slot ``n`` whose probability and goal value are 1
    and whose weight is 0, so it is neutral in products and sums.
    """

    def __init__(self, actions: Sequence[Action], n: int):
        self.actions = list(actions)

        def pad(sets):
            k = max((len(s) for s in sets), default=0)
            m = np.full((len(sets), max(k, 1)), n, dtype=np.intp)
            for i, s in enumerate(sets):
                m[i, : len(s)] = sorted(s)
            return m

        self.pre = pad([a.pre for a in self.actions])
        self.add = pad([a.add for a in self.actions])
        self.dele = pad([a.delete for a in self.actions])

    def child(self, probs: np.ndarray, i: int) -> np.ndarray:
        """Marginals after attempting action ``i``; same arithmetic as ``attempt_probs``."""
        p = np.append(probs, 1.0)
        a = np.prod(p[self.pre[i]])
        p[self.add[i]] = a + (1.0 - a) * p[self.add[i]]
        p[self.dele[i]] = p[self.dele[i]] - a
        return p[:-1]


@dataclass(eq=False)
class _Node:
    probs: np.ndarray
    parent: "_Node | None"
    action: int
    depth: int


def _plan_of(node: _Node | None, actions: Sequence[Action], tail: int = -1) -> list[Action]:
    out = [actions[tail]] if tail >= 0 else []
    while node is not None and node.action >= 0:
        out.append(actions[node.action])
        node = node.parent
    out.reverse()
    return out


def _belief_key(p: np.ndarray) -> bytes:
    return (np.round(p, 6) + 0.0).tobytes()


def default_tolerance(goal: BeliefState) -> float:
    return 0.01 * int(np.count_nonzero(goal.probs > 0.5))


def continuous_plan(
    init: BeliefState,
    goal: BeliefState,
    actions: Sequence[Action],
    cfg: SearchConfig | None = None,
) -> PlanResult:
    """Best-first search in belief space towards ``goal``.

    Nodes are ordered by weighted L1 distance to the goal marginals, then by
    plan length. Children come from attempting every action whose
    applicability exceeds the floor, in descending applicability. The search
    returns as soon as a belief within tolerance is generated, otherwise the
    best belief seen when the open list, the node budget or the patience runs
    out.
    """
    cfg = cfg or SearchConfig()
    if init.universe is not goal.universe and init.universe != goal.universe:
        raise UniverseMismatchError("init and goal beliefs are over different universes")
    n = len(init)
    actions = list(actions)
    for a in actions:
        if (a.pre | a.add | a.delete) and max(a.pre | a.add | a.delete) >= n:
            raise UniverseMismatchError(f"action {a} references atoms outside the universe")
    tol = default_tolerance(goal) if cfg.goal_tolerance is None else cfg.goal_tolerance
    w = goal_weights(goal, weighted=cfg.weighted_goal, positive_only=cfg.positive_only)
    g = goal.probs
    g_ext = np.append(g, 1.0)
    w_ext = np.append(w, 0.0)

    def dist(p):
        return float((w * np.abs(p - g)).sum())

    d0 = dist(init.probs)
    root = _Node(init.probs, None, -1, 0)
    if d0 <= tol:
        return PlanResult([], d0, MATCHED, d0, 0)
    if not actions:
        return PlanResult([], d0, NO_IMPROVEMENT, d0, 0)
    table = _ActionTable(actions, n)
    # Children of one expanded node share a single heap entry that walks them in
    # (distance, generation order); this pops in exactly the order a heap holding
    # every child would, at one push per pop.
    # entries: (distance, depth, tie-break, child position, sibling group)
    heap: list[tuple] = [(d0, 0, 0, 0, None)]
    next_seq = 1
    closed: set[bytes] = set()
    best = (d0, 0, None, -1)  # dist, depth, parent node, action index
    best_probs = init.probs
    expansions = 0
    stale = 0
    status = NO_IMPROVEMENT

    while heap:
        node_dist, depth, _, k, grp = heapq.heappop(heap)
        if grp is None:
            node = root
        else:
            parent, ais, ds, seqs = grp
            if k + 1 < len(ais):
                heapq.heappush(heap, (ds[k + 1], depth, seqs[k + 1], k + 1, grp))
            node = _Node(table.child(parent.probs, ais[k]), parent, ais[k], depth)
        key = _belief_key(node.probs)
        if key in closed:
            continue
        closed.add(key)
        if node.depth >= cfg.max_depth:
            continue
        if expansions >= cfg.node_budget:
            status = BUDGET_EXHAUSTED
            break
        expansions += 1

        p_ext = np.append(node.probs, 1.0)
        app = np.prod(p_ext[table.pre], axis=1)
        idx = np.flatnonzero(app > cfg.applicability_floor)
        if idx.size == 0:
            stale += 1
            continue
        idx = idx[np.argsort(-app[idx], kind="stable")]
        a = app[idx][:, None]
        old_add = p_ext[table.add[idx]]
        new_add = a + (1.0 - a) * old_add
        ga, wa = g_ext[table.add[idx]], w_ext[table.add[idx]]
        d_add = (wa * (np.abs(new_add - ga) - np.abs(old_add - ga))).sum(axis=1)
        old_del = p_ext[table.dele[idx]]
        new_del = old_del - a
        gd, wd = g_ext[table.dele[idx]], w_ext[table.dele[idx]]
        d_del = (wd * (np.abs(new_del - gd) - np.abs(old_del - gd))).sum(axis=1)
        child_d = node_dist + d_add + d_del

        depth = node.depth + 1
        first = int(np.argmin(child_d))  # earliest child among the closest
        improved = (float(child_d[first]), depth) < best[:2]
        if improved:
            best = (float(child_d[first]), depth, node, int(idx[first]))
        if depth < cfg.max_depth:  # deeper children are scored but never expanded
            order = np.argsort(child_d, kind="stable")
            seqs = (next_seq + order).tolist()
            grp = (node, idx[order].tolist(), child_d[order].tolist(), seqs)
            heapq.heappush(heap, (grp[2][0], depth, seqs[0], 0, grp))
        next_seq += idx.size
        if improved:
            stale = 0
            if best[0] <= tol:
                status = MATCHED
                break
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                status = NO_IMPROVEMENT
                break

    _, _, parent, ai = best
    if parent is None:
        plan, final = [], best_probs
    else:
        plan = _plan_of(parent, actions, ai)
        final = attempt_probs(parent.probs, actions[ai])
    final_d = dist(final)
    if status == MATCHED and final_d > tol:
        status = NO_IMPROVEMENT  # accumulated rounding in the incremental distance
    return PlanResult(plan, final_d, status, d0, expansions)


def _mask(ids) -> int:
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def symbolic_plan(
    init: frozenset[int],
    goal: frozenset[int],
    actions: Sequence[Action],
    cfg: SearchConfig | None = None,
    universe: AtomUniverse | None = None,
) -> PlanResult:
    """Greedy best-first search with the goal-count heuristic.

    The goal test is ``goal <= state``; ``final_belief_distance`` reports the
    number of unmet goal atoms in the returned state. If the goal is not
    reached the plan to the state with the fewest unmet goal atoms is returned.
    """
    cfg = cfg or SearchConfig()
    if universe is not None:
        n = len(universe)
        if any(i < 0 or i >= n for i in itertools.chain(init, goal)):
            raise UniverseMismatchError("state ids fall outside the universe")
        for a in actions:
            if any(i >= n for i in a.pre | a.add | a.delete):
                raise UniverseMismatchError(f"action {a} references atoms outside the universe")
    actions = list(actions)
    pre = [_mask(a.pre) for a in actions]
    add = [_mask(a.add) for a in actions]
    dele = [_mask(a.delete) for a in actions]
    gmask = _mask(goal)
    s0 = _mask(init)

    def h(s: int) -> int:
        return (gmask & ~s).bit_count()

    h0 = h(s0)
    if h0 == 0:
        return PlanResult([], 0.0, MATCHED, 0.0, 0)
    seq = itertools.count()
    parents: dict[int, tuple[int | None, int]] = {s0: (None, -1)}
    depth_of = {s0: 0}
    heap = [(h0, 0, next(seq), s0)]
    closed: set[int] = set()
    best = (h0, 0, s0)
    expansions = 0
    status = NO_IMPROVEMENT

    def plan_to(s: int) -> list[Action]:
        out = []
        while parents[s][0] is not None:
            p, ai = parents[s]
            out.append(actions[ai])
            s = p
        out.reverse()
        return out

    while heap:
        hv, d, _, s = heapq.heappop(heap)
        if s in closed:
            continue
        closed.add(s)
        if d >= cfg.max_depth:
            continue
        if expansions >= cfg.node_budget:
            status = BUDGET_EXHAUSTED
            break
        expansions += 1
        done = False
        for ai in range(len(actions)):
            pm = pre[ai]
            if s & pm != pm:
                continue
            t = (s & ~dele[ai]) | add[ai]
            if t in parents:
                continue
            parents[t] = (s, ai)
            depth_of[t] = d + 1
            ht = h(t)
            if (ht, d + 1) < best[:2]:
                best = (ht, d + 1, t)
            if ht == 0:
                done = True
                break
            heapq.heappush(heap, (ht, d + 1, next(seq), t))
        if done:
            status = MATCHED
            break

    hb, _, sb = best
    return PlanResult(plan_to(sb), float(hb), status, float(h0), expansions)
