"""World, task and demonstration types shared by the benchmark simulators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from ..pddl import (
    Action,
    AtomUniverse,
    DomainDef,
    GroundProblem,
    PddlError,
    ProblemDef,
    apply_discrete,
    ground_problem,
    parse_domain,
)
from ..planner import SearchConfig, symbolic_plan

BLOCK_SIZE = 0.05  # m
HAND_POSE = (0.5, 0.5, 1.5)
WORKSPACE_LO = np.array([0.0, 0.0, 0.0])
WORKSPACE_HI = np.array([1.0, 1.0, 1.5])


def bundled_domain_path(name: str) -> Path:
    return Path(str(resources.files("probplan.domains") / "pddl" / f"{name}.pddl"))


def load_bundled_domain(name: str) -> DomainDef:
    return parse_domain(bundled_domain_path(name).read_text(encoding="utf-8"))


@dataclass(frozen=True, eq=False)
class ContinuousState:
    """Object poses in metres, one row per declared object, plus held flags."""

    objects: tuple[str, ...]
    positions: np.ndarray
    held: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(len(self.objects), 3)
        held = np.asarray(self.held, dtype=bool).reshape(len(self.objects))
        if not np.all(np.isfinite(pos)):
            raise ValueError("poses must be finite")
        pos.flags.writeable = False
        held.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "held", held)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ContinuousState)
            and self.objects == other.objects
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.held, other.held)
        )

    def pose(self, obj: str) -> np.ndarray:
        return self.positions[self.objects.index(obj)]

    def features(self) -> np.ndarray:
        """Flattened positions scaled to [-1, 1] over the workspace box, then held flags."""
        scaled = 2.0 * (self.positions - WORKSPACE_LO) / (WORKSPACE_HI - WORKSPACE_LO) - 1.0
        return np.concatenate([scaled.ravel(), self.held.astype(np.float64)])

    def to_dict(self) -> dict:
        return {
            "objects": list(self.objects),
            "positions": self.positions.tolist(),
            "held": self.held.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContinuousState":
        return cls(tuple(d["objects"]), np.array(d["positions"]), np.array(d["held"]))


class Env:
    """A grounded benchmark problem plus its pose layout rules."""

    tag = ""

    def __init__(self, domain: DomainDef, problem: ProblemDef):
        self.ground: GroundProblem = ground_problem(domain, problem)
        self.domain = domain
        self.problem = problem
        self.universe: AtomUniverse = self.ground.universe
        self.actions: tuple[Action, ...] = self.ground.actions
        self.objects: tuple[str, ...] = tuple(o for o, _ in problem.objects)
        self._action_set = set(self.actions)

    @property
    def params(self) -> dict:
        raise NotImplementedError

    def is_valid(self, state: frozenset[int]) -> bool:
        raise NotImplementedError

    def layout(self, state: frozenset[int], prev: ContinuousState | None = None, rng=None) -> ContinuousState:
        raise NotImplementedError

    def random_initial(self, rng: np.random.Generator) -> frozenset[int]:
        raise NotImplementedError

    def world(self, state: frozenset[int], prev: ContinuousState | None = None, rng=None) -> "WorldState":
        return WorldState(self, frozenset(state), self.layout(state, prev, rng))

    def action(self, action: Action | str) -> Action:
        if isinstance(action, Action):
            if action not in self._action_set:
                raise PddlError(f"unknown action {action}")
            return action
        return self.ground.action(action)

    def __eq__(self, other) -> bool:
        return isinstance(other, Env) and (self.tag, self.params) == (other.tag, other.params)

    def __hash__(self) -> int:
        return hash((self.tag, json.dumps(self.params, sort_keys=True)))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params})"


@dataclass(frozen=True, eq=False)
class WorldState:
    env: Env
    symbolic: frozenset[int]
    poses: ContinuousState

    @property
    def domain(self) -> str:
        return self.env.tag

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WorldState)
            and self.env == other.env
            and self.symbolic == other.symbolic
            and self.poses == other.poses
        )

    def atoms(self) -> list[str]:
        return self.env.universe.names(self.symbolic)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    domain: str
    initial: WorldState
    goal: frozenset[int]
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def env(self) -> Env:
        return self.initial.env


@dataclass(frozen=True)
class Demonstration:
    task_id: str
    frames: tuple[WorldState, ...]
    actions: tuple[Action, ...]

    def __post_init__(self):
        if len(self.frames) != len(self.actions) + 1:
            raise ValueError("a demonstration needs exactly one more frame than actions")


def execute(world: WorldState, action: Action | str) -> tuple[WorldState, bool]:
    """Attempt ``action``; an unmet precondition leaves the world unchanged.

    Returns the next world and whether the attempt succeeded.
    """
    env = world.env
    a = env.action(action)
    if not a.pre <= world.symbolic:
        return world, False
    nxt = apply_discrete(world.symbolic, a)
    return WorldState(env, nxt, env.layout(nxt, world.poses)), True


def check_success(world: WorldState, goal: frozenset[int]) -> bool:
    return goal <= world.symbolic


def gen_demo(task: TaskSpec, cfg: SearchConfig | None = None, retries: int = 3) -> Demonstration:
    """Solve ``task`` on ground truth and record every frame with its action."""
    cfg = cfg or SearchConfig()
    env = task.env
    for _ in range(retries + 1):
        res = symbolic_plan(task.initial.symbolic, task.goal, env.actions, cfg)
        if res.matched:
            break
        cfg = cfg.with_(node_budget=cfg.node_budget * 4, max_depth=cfg.max_depth * 2)
    else:
        raise RuntimeError(f"could not solve task {task.id} for its demonstration")
    frames = [task.initial]
    for a in res.plan:
        w, ok = execute(frames[-1], a)
        assert ok
        frames.append(w)
    return Demonstration(task.id, tuple(frames), tuple(res.plan))


def aligned_symbolic_states(demo: Demonstration, env: Env | None = None) -> list[frozenset[int]]:
    """Replay the action annotations from the first frame's state: one label per frame."""
    env = env or demo.frames[0].env
    states = [demo.frames[0].symbolic]
    for a in demo.actions:
        states.append(apply_discrete(states[-1], env.action(a)))
    return states


# -- JSON ------------------------------------------------------------------


def world_to_dict(w: WorldState) -> dict:
    return {"atoms": w.atoms(), "poses": w.poses.to_dict()}


def world_from_dict(d: dict, env: Env) -> WorldState:
    state = env.universe.ids(d["atoms"])
    return WorldState(env, state, ContinuousState.from_dict(d["poses"]))


def task_to_dict(t: TaskSpec) -> dict:
    return {
        "id": t.id,
        "domain": t.domain,
        "params": t.env.params,
        "meta": t.meta,
        "initial": world_to_dict(t.initial),
        "goal": t.env.universe.names(t.goal),
    }


def task_from_dict(d: dict) -> TaskSpec:
    from . import get_env

    env = get_env(d["domain"], **d["params"])
    return TaskSpec(d["id"], d["domain"], world_from_dict(d["initial"], env), env.universe.ids(d["goal"]), d.get("meta", {}))


def demo_to_dict(demo: Demonstration) -> dict:
    env = demo.frames[0].env
    return {
        "task_id": demo.task_id,
        "domain": env.tag,
        "params": env.params,
        "frames": [world_to_dict(f) for f in demo.frames],
        "actions": [str(a) for a in demo.actions],
    }


def demo_from_dict(d: dict) -> Demonstration:
    from . import get_env

    env = get_env(d["domain"], **d["params"])
    frames = tuple(world_from_dict(f, env) for f in d["frames"])
    return Demonstration(d["task_id"], frames, tuple(env.action(a) for a in d["actions"]))


def save_json(obj: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def save_tasks(tasks: Sequence[TaskSpec], root: Path, split: str) -> list[Path]:
    out = []
    for t in tasks:
        p = Path(root) / "tasks" / t.domain / split / f"{t.id}.json"
        save_json(task_to_dict(t), p)
        out.append(p)
    return out


def load_tasks(root: Path, domain: str, split: str) -> list[TaskSpec]:
    d = Path(root) / "tasks" / domain / split
    return [task_from_dict(json.loads(p.read_text())) for p in sorted(d.glob("*.json"))]
