"""Block stacking: towers of 5 cm cubes on a 1 m x 1 m table."""

from __future__ import annotations

import string

import numpy as np

from ..pddl import ProblemDef
from ..planner import is_valid_blocksworld
from .base import BLOCK_SIZE, HAND_POSE, ContinuousState, Env, TaskSpec, load_bundled_domain

GRID_STEP = 0.15
GRID_N = 6
_CELLS = np.array(
    [(0.125 + GRID_STEP * i, 0.125 + GRID_STEP * j) for j in range(GRID_N) for i in range(GRID_N)]
)


class StackingEnv(Env):
    tag = "stacking"

    def __init__(self, n_blocks: int):
        if not 2 <= n_blocks <= 26:
            raise ValueError("n_blocks must be between 2 and 26")
        self.n_blocks = n_blocks
        self.blocks = tuple(string.ascii_lowercase[:n_blocks])
        problem = ProblemDef(f"stack-{n_blocks}", "blocksworld", tuple((b, "block") for b in self.blocks), (), ())
        super().__init__(load_bundled_domain("blocksworld"), problem)
        u = self.universe
        self.on = {(x, y): u.id(f"on({x},{y})") for x in self.blocks for y in self.blocks if x != y}
        self.ontable = {b: u.id(f"ontable({b})") for b in self.blocks}
        self.clear = {b: u.id(f"clear({b})") for b in self.blocks}
        self.holding = {b: u.id(f"holding({b})") for b in self.blocks}
        self.handempty = u.id("handempty")

    @property
    def params(self) -> dict:
        return {"n_blocks": self.n_blocks}

    def is_valid(self, state) -> bool:
        return is_valid_blocksworld(frozenset(state), self.universe)

    def state_from_towers(self, towers, held: str | None = None) -> frozenset[int]:
        """Towers are lists bottom to top."""
        s = set()
        for t in towers:
            s.add(self.ontable[t[0]])
            s.add(self.clear[t[-1]])
            for lower, upper in zip(t, t[1:]):
                s.add(self.on[upper, lower])
        s.add(self.holding[held] if held else self.handempty)
        return frozenset(s)

    def towers(self, state) -> list[list[str]]:
        above = {y: x for (x, y), i in self.on.items() if i in state}
        out = []
        for b in self.blocks:
            if self.ontable[b] in state:
                t = [b]
                while t[-1] in above:
                    t.append(above[t[-1]])
                out.append(t)
        return out

    def random_initial(self, rng: np.random.Generator) -> frozenset[int]:
        order = [self.blocks[i] for i in rng.permutation(self.n_blocks)]
        towers = [[order[0]]]
        for b in order[1:]:
            if rng.random() < 0.5:
                towers.append([b])
            else:
                towers[-1].append(b)
        return self.state_from_towers(towers)

    def layout(self, state, prev=None, rng=None):
        towers = self.towers(state)
        held = [b for b in self.blocks if self.holding[b] in state]
        placed = sum(len(t) for t in towers) + len(held)
        if placed != self.n_blocks:
            raise ValueError("cannot lay out an inconsistent blocksworld state")
        pos = np.zeros((self.n_blocks, 3))
        held_flags = np.zeros(self.n_blocks, dtype=bool)
        idx = {b: i for i, b in enumerate(self.objects)}
        cells: dict[str, int] = {}
        if prev is not None:
            for t in towers:
                i = idx[t[0]]
                if not prev.held[i] and abs(prev.positions[i, 2] - BLOCK_SIZE / 2) < 1e-9:
                    c = int(np.argmin(((_CELLS - prev.positions[i, :2]) ** 2).sum(axis=1)))
                    if c not in cells.values():
                        cells[t[0]] = c
        free = [c for c in range(len(_CELLS)) if c not in cells.values()]
        rest = [t[0] for t in towers if t[0] not in cells]
        if rng is not None:
            picks = rng.choice(len(free), size=len(rest), replace=False)
            for b, k in zip(rest, picks):
                cells[b] = free[int(k)]
        else:
            for b, c in zip(rest, free):
                cells[b] = c
        for t in towers:
            x, y = _CELLS[cells[t[0]]]
            for level, b in enumerate(t):
                pos[idx[b]] = (x, y, BLOCK_SIZE / 2 + BLOCK_SIZE * level)
        for b in held:
            pos[idx[b]] = HAND_POSE
            held_flags[idx[b]] = True
        return ContinuousState(self.objects, pos, held_flags)


_ENVS: dict[int, StackingEnv] = {}


def stacking_env(n_blocks: int) -> StackingEnv:
    if n_blocks not in _ENVS:
        _ENVS[n_blocks] = StackingEnv(n_blocks)
    return _ENVS[n_blocks]


def gen_stacking_task(n_blocks: int, seed: int, task_id: str | None = None) -> TaskSpec:
    """Random initial towers and a different random goal configuration."""
    env = stacking_env(n_blocks)
    rng = np.random.default_rng(seed)
    init = env.random_initial(rng)
    goal = env.random_initial(rng)
    while goal == init:
        goal = env.random_initial(rng)
    world = env.world(init, rng=rng)
    return TaskSpec(task_id or f"stacking-{n_blocks}-{seed}", env.tag, world, goal, {"seed": seed})
