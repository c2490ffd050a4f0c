"""Object sorting: items go from the table into the container of their category."""

from __future__ import annotations

import numpy as np

from ..pddl import ProblemDef
from ..planner import is_valid_sorting
from .base import ContinuousState, Env, TaskSpec, load_bundled_domain

TABLE = "table"
_TABLE_CELLS = np.array([(0.125 + 0.15 * i, 0.125 + 0.15 * j) for j in range(4) for i in range(6)])
_ITEM_Z = 0.03
_SLOT = 0.04


class SortingEnv(Env):
    tag = "sorting"

    def __init__(self, n_objects: int, n_containers: int = 4):
        if not 1 <= n_objects <= len(_TABLE_CELLS):
            raise ValueError(f"n_objects must be between 1 and {len(_TABLE_CELLS)}")
        if n_containers < 1:
            raise ValueError("need at least one container")
        self.n_objects = n_objects
        self.n_containers = n_containers
        self.items = tuple(f"o{i + 1}" for i in range(n_objects))
        self.containers = tuple(f"c{k + 1}" for k in range(n_containers))
        self.locations = self.containers + (TABLE,)
        objects = tuple((o, "item") for o in self.items) + tuple((loc, "location") for loc in self.locations)
        problem = ProblemDef(f"sort-{n_objects}x{n_containers}", "sorting", objects, (), ())
        super().__init__(load_bundled_domain("sorting"), problem)
        self.at = {(o, loc): self.universe.id(f"at({o},{loc})") for o in self.items for loc in self.locations}
        xs = np.linspace(0.2, 0.8, n_containers) if n_containers > 1 else np.array([0.5])
        self.location_xy = {c: np.array([x, 0.85]) for c, x in zip(self.containers, xs)}
        self.location_xy[TABLE] = np.array([0.5, 0.35])

    @property
    def params(self) -> dict:
        return {"n_objects": self.n_objects, "n_containers": self.n_containers}

    def is_valid(self, state) -> bool:
        return is_valid_sorting(frozenset(state), self.universe)

    def location_of(self, state) -> dict[str, str]:
        return {o: loc for (o, loc), i in self.at.items() if i in state}

    def state_from_locations(self, where: dict[str, str]) -> frozenset[int]:
        return frozenset(self.at[o, where[o]] for o in self.items)

    def random_initial(self, rng: np.random.Generator) -> frozenset[int]:
        return self.state_from_locations({o: TABLE for o in self.items})

    def layout(self, state, prev=None, rng=None):
        where = self.location_of(state)
        if len(where) != self.n_objects or not self.is_valid(state):
            raise ValueError("cannot lay out an inconsistent sorting state")
        idx = {o: i for i, o in enumerate(self.objects)}
        pos = np.zeros((len(self.objects), 3))
        for loc in self.locations:
            pos[idx[loc], :2] = self.location_xy[loc]
        on_table = [o for o in self.items if where[o] == TABLE]
        cells: dict[str, int] = {}
        if prev is not None:
            for o in on_table:
                p = prev.positions[idx[o]]
                c = int(np.argmin(((_TABLE_CELLS - p[:2]) ** 2).sum(axis=1)))
                if np.allclose(_TABLE_CELLS[c], p[:2]) and c not in cells.values():
                    cells[o] = c
        free = [c for c in range(len(_TABLE_CELLS)) if c not in cells.values()]
        rest = [o for o in on_table if o not in cells]
        if rng is not None:
            picks = rng.choice(len(free), size=len(rest), replace=False)
            cells.update({o: free[int(k)] for o, k in zip(rest, picks)})
        else:
            cells.update(dict(zip(rest, free)))
        for o in on_table:
            pos[idx[o]] = (*_TABLE_CELLS[cells[o]], _ITEM_Z)
        for c in self.containers:
            inside = [o for o in self.items if where[o] == c]
            for s, o in enumerate(inside):
                off = np.array([(s % 3) - 1, (s // 3) - 1]) * _SLOT
                pos[idx[o]] = (*(self.location_xy[c] + off), _ITEM_Z)
        return ContinuousState(self.objects, pos, np.zeros(len(self.objects), dtype=bool))


_ENVS: dict[tuple[int, int], SortingEnv] = {}


def sorting_env(n_objects: int, n_containers: int = 4) -> SortingEnv:
    key = (n_objects, n_containers)
    if key not in _ENVS:
        _ENVS[key] = SortingEnv(n_objects, n_containers)
    return _ENVS[key]


def sorting_goal(env: SortingEnv, categories, container_of) -> frozenset[int]:
    return env.state_from_locations(
        {o: env.containers[container_of[c]] for o, c in zip(env.items, categories)}
    )


def displaced_initial(env: SortingEnv, goal: frozenset[int], rng: np.random.Generator) -> frozenset[int]:
    """Start some items inside a wrong container so replaying the demonstration fails.

    Every item is displaced with probability 1/2 and at least one always is;
    the rest start on the table.
    """
    target = env.location_of(goal)
    if env.n_containers < 2:
        raise ValueError("displacement needs at least two containers")
    moved = rng.random(env.n_objects) < 0.5
    if not moved.any():
        moved[rng.integers(env.n_objects)] = True
    where = {}
    for o, m in zip(env.items, moved):
        if m:
            wrong = [c for c in env.containers if c != target[o]]
            where[o] = wrong[int(rng.integers(len(wrong)))]
        else:
            where[o] = TABLE
    return env.state_from_locations(where)


def gen_sorting_task(
    n_objects: int,
    n_categories: int,
    seed: int,
    n_containers: int = 4,
    alternative: bool = False,
    task_id: str | None = None,
) -> TaskSpec:
    """Random categories and category-to-container map; items start on the table.

    With ``alternative`` the initial state is drawn by :func:`displaced_initial`.
    """
    if not 1 <= n_categories <= n_containers:
        raise ValueError("n_categories must be between 1 and n_containers")
    env = sorting_env(n_objects, n_containers)
    rng = np.random.default_rng(seed)
    categories = rng.integers(n_categories, size=n_objects).tolist()
    container_of = rng.permutation(n_containers)[:n_categories].tolist()
    goal = sorting_goal(env, categories, container_of)
    init = displaced_initial(env, goal, rng) if alternative else env.random_initial(rng)
    world = env.world(init, rng=rng)
    meta = {"seed": seed, "categories": categories, "container_of": container_of, "alternative": alternative}
    return TaskSpec(task_id or f"sorting-{n_objects}-{seed}", env.tag, world, goal, meta)
