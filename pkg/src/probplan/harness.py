"""Meta-train / meta-test orchestration and paired method comparison."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .belief import BeliefState, l1_distance
from .domains import (
    Demonstration,
    TaskSpec,
    aligned_symbolic_states,
    check_success,
    execute,
    gen_demo,
    gen_sorting_task,
    gen_stacking_task,
    sorting_env,
    stacking_env,
)
from .domains.base import save_json
from .grounding import (
    Grounder,
    NoisyGrounder,
    NoisyOracleConfig,
    OracleGrounder,
    SgnGrounder,
    TrainConfig,
    ground_demo_goal,
    load_checkpoint,
    save_checkpoint,
    train_sgn,
)
from .planner import SearchConfig, continuous_plan, discretize_map, rectify, symbolic_plan

log = logging.getLogger(__name__)

METHODS = ("CP", "SP", "SP+rectify")
RESULTS_HEADER = ("task_id", "method", "success", "steps", "replans", "final_distance")
SEED_ENV = "PROBPLAN_SEED"


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "stacking"
    n_blocks: int = 8
    n_objects: int = 8
    n_categories: int = 4
    n_containers: int = 4
    alternative: bool = True  # sorting test tasks start with items in wrong containers
    n_train_tasks: int = 10
    n_test_tasks: int = 100
    demos_per_task: int = 1
    grounding: dict = field(default_factory=lambda: {"kind": "oracle"})
    train: dict = field(default_factory=dict)
    planner: dict = field(default_factory=dict)
    alpha: int = 5
    goal_smoothing: int = 1
    methods: tuple[str, ...] = METHODS
    train_task_counts: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.domain not in ("stacking", "sorting"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if min(self.n_train_tasks, self.n_test_tasks, self.demos_per_task) < 1:
            raise ValueError("task and demonstration counts must be at least 1")
        if self.goal_smoothing < 1:
            raise ValueError("goal_smoothing must be at least 1")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "train_task_counts", tuple(self.train_task_counts))
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {list(self.methods)}")
        if any(c < 1 for c in self.train_task_counts):
            raise ValueError("train_task_counts entries must be at least 1")
        kind = self.grounding.get("kind")
        if kind not in ("oracle", "noisy", "sgn"):
            raise ValueError(f"grounding kind must be oracle, noisy or sgn, got {kind!r}")
        self.search_config()
        self.train_config()
        if kind == "noisy":
            self.noise_config()

    def search_config(self) -> SearchConfig:
        return SearchConfig.from_dict(self.planner)

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({"seed": self.seed, **self.train})

    def noise_config(self) -> NoisyOracleConfig:
        opts = {k: v for k, v in self.grounding.items() if k != "kind"}
        return NoisyOracleConfig(**{"seed": self.seed, **opts})

    def with_(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig(**{**self.to_dict(), **kw})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["train_task_counts"] = list(self.train_task_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict, env: dict | None = None) -> "ExperimentConfig":
        """Build from JSON-like data; ``PROBPLAN_SEED`` in ``env`` overrides the seed."""
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            d["seed"] = int(env[SEED_ENV])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- task sets ----------------------------------------------------------------

_SPLIT = {"train": 0, "test": 1, "demo": 2, "train-demo": 3}


def _seed(cfg: ExperimentConfig, split: str, i: int, j: int = 0) -> int:
    return int(np.random.SeedSequence([cfg.seed, _SPLIT[split], i, j]).generate_state(1)[0])


def _env(cfg: ExperimentConfig):
    if cfg.domain == "stacking":
        return stacking_env(cfg.n_blocks)
    return sorting_env(cfg.n_objects, cfg.n_containers)


def make_task(cfg: ExperimentConfig, split: str, i: int) -> TaskSpec:
    tid = f"{split}-{i:04d}"
    seed = _seed(cfg, split, i)
    if cfg.domain == "stacking":
        return gen_stacking_task(cfg.n_blocks, seed, task_id=tid)
    alt = cfg.alternative and split == "test"
    return gen_sorting_task(cfg.n_objects, cfg.n_categories, seed, cfg.n_containers, alternative=alt, task_id=tid)


def sibling_instance(task: TaskSpec, seed: int, suffix: str = "demo") -> TaskSpec:
    """Another instance of the same goal with a freshly drawn initial world."""
    env = task.env
    rng = np.random.default_rng(seed)
    init = env.random_initial(rng)
    return TaskSpec(f"{task.id}-{suffix}", task.domain, env.world(init, rng=rng), task.goal, dict(task.meta))


def make_tasks(cfg: ExperimentConfig, split: str, n: int | None = None) -> list[TaskSpec]:
    n = cfg.n_train_tasks if n is None and split == "train" else (cfg.n_test_tasks if n is None else n)
    return [make_task(cfg, split, i) for i in range(n)]


def eval_demos(cfg: ExperimentConfig, tasks: Sequence[TaskSpec]) -> list[Demonstration]:
    """One demonstration per test task, recorded on a separate instance of its goal."""
    scfg = cfg.search_config()
    out = []
    for i, t in enumerate(tasks):
        inst = sibling_instance(t, _seed(cfg, "demo", i))
        d = gen_demo(inst, scfg)
        out.append(Demonstration(t.id, d.frames, d.actions))
    return out


def train_demos(cfg: ExperimentConfig, tasks: Sequence[TaskSpec]) -> list[Demonstration]:
    scfg = cfg.search_config()
    out = []
    for i, t in enumerate(tasks):
        for j in range(cfg.demos_per_task):
            inst = t if j == 0 else sibling_instance(t, _seed(cfg, "train-demo", i, j), f"demo{j}")
            out.append(gen_demo(inst, scfg))
    return out


# -- training -----------------------------------------------------------------


def training_pairs(demos: Sequence[Demonstration]) -> list:
    pairs = []
    for d in demos:
        for frame, state in zip(d.frames, aligned_symbolic_states(d)):
            pairs.append((frame.poses, state))
    return pairs


def run_training(cfg: ExperimentConfig, out_dir=None, n_train_tasks: int | None = None) -> Grounder:
    """Return the configured grounding model, training a network when asked for one."""
    kind = cfg.grounding["kind"]
    if kind == "oracle":
        return OracleGrounder()
    if kind == "noisy":
        return NoisyGrounder(cfg.noise_config())
    if cfg.grounding.get("checkpoint"):
        return SgnGrounder(load_checkpoint(cfg.grounding["checkpoint"]))
    tasks = make_tasks(cfg, "train", n_train_tasks)
    pairs = training_pairs(train_demos(cfg, tasks))
    model, hist = train_sgn(pairs, _env(cfg).universe, cfg.train_config())
    log.info("trained grounding network on %d frames, final loss %.4g", len(pairs), hist.train_loss[-1])
    if out_dir is not None:
        tag = f"sgn-{len(tasks)}" if n_train_tasks is not None else "sgn"
        save_checkpoint(model, Path(out_dir) / f"{tag}.ckpt")
        save_json(hist.to_dict(), Path(out_dir) / f"{tag}-history.json")
    return SgnGrounder(model)


# -- evaluation -----------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeRecord:
    task_id: str
    method: str
    success: bool
    steps: int
    replans: int
    final_distance: float

    def csv_row(self) -> list[str]:
        return [self.task_id, self.method, str(int(self.success)), str(self.steps), str(self.replans), f"{self.final_distance:.6f}"]


def _plan_round(method: str, init: BeliefState, goal: BeliefState, task: TaskSpec, scfg: SearchConfig):
    env = task.env
    if method == "CP":
        return continuous_plan(init, goal, env.actions, scfg).plan
    s0, sg = discretize_map(init), discretize_map(goal)
    if method == "SP+rectify":
        s0, sg = rectify(s0, init, task.domain), rectify(sg, goal, task.domain)
    return symbolic_plan(s0, sg, env.actions, scfg, env.universe).plan


def run_episode(
    model: Grounder,
    task: TaskSpec,
    demo: Demonstration,
    method: str = "CP",
    alpha: int = 5,
    search: SearchConfig | None = None,
    goal_smoothing: int = 1,
) -> EpisodeRecord:
    """Ground, plan, execute, and re-plan until success or ``alpha`` rounds.

    A round also ends early when an executed action's attempt fails.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    scfg = search or SearchConfig()
    g = model.for_episode(task.id)
    goal_b = ground_demo_goal(g, demo, goal_smoothing)
    world = task.initial
    steps = rounds = 0
    while rounds < alpha and not check_success(world, task.goal):
        rounds += 1
        plan = _plan_round(method, g.ground(world), goal_b, task, scfg)
        if not plan:
            break
        for a in plan:
            world, ok = execute(world, a)
            steps += 1
            if not ok:
                break
    return EpisodeRecord(
        task.id, method, check_success(world, task.goal), steps, rounds, l1_distance(g.ground(world), goal_b)
    )


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class EvalReport:
    method: str
    rows: list[EpisodeRecord]
    config: dict

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def successes(self) -> int:
        return sum(r.success for r in self.rows)

    @property
    def success_rate(self) -> float:
        return self.successes / self.n

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.n)

    def summary(self) -> dict:
        lo, hi = self.interval
        return {
            "method": self.method,
            "n_tasks": self.n,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "wilson_95": [lo, hi],
            "mean_steps": float(np.mean([r.steps for r in self.rows])),
            "mean_replans": float(np.mean([r.replans for r in self.rows])),
        }

    def to_dict(self) -> dict:
        return {**self.summary(), "config": self.config, "rows": [asdict(r) for r in self.rows]}


def evaluate(
    cfg: ExperimentConfig,
    model: Grounder,
    tasks: Sequence[TaskSpec],
    demos: Sequence[Demonstration],
    methods: Sequence[str] | None = None,
) -> dict[str, EvalReport]:
    methods = list(methods or cfg.methods)
    scfg = cfg.search_config()
    rows: dict[str, list[EpisodeRecord]] = {m: [] for m in methods}
    for task, demo in zip(tasks, demos):
        for m in methods:
            rows[m].append(run_episode(model, task, demo, m, cfg.alpha, scfg, cfg.goal_smoothing))
    return {m: EvalReport(m, sorted(rows[m], key=lambda r: r.task_id), cfg.to_dict()) for m in methods}


def results_csv(reports: dict[str, EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    order = {m: k for k, m in enumerate(reports)}
    rows = [r for rep in reports.values() for r in rep.rows]
    for r in sorted(rows, key=lambda r: (r.task_id, order[r.method])):
        w.writerow(r.csv_row())
    return buf.getvalue()


def run_experiment(
    cfg: ExperimentConfig, methods: Sequence[str] | None = None, out_dir=None
) -> dict[str, EvalReport]:
    """Paired comparison: every method sees the same tasks, demos and grounding outputs."""
    methods = list(methods or cfg.methods)
    tasks = make_tasks(cfg, "test")
    demos = eval_demos(cfg, tasks)
    out = Path(out_dir) if out_dir is not None else None
    counts = sorted(set(cfg.train_task_counts) | {cfg.n_train_tasks})
    trainable = cfg.grounding["kind"] == "sgn" and not cfg.grounding.get("checkpoint")
    by_count: dict[int, dict[str, EvalReport]] = {}
    curves = []
    reps = None
    for c in counts:
        if reps is None or trainable:
            model = run_training(cfg, out, c if len(counts) > 1 else None)
            reps = evaluate(cfg, model, tasks, demos, methods)
        by_count[c] = reps
        for m, rep in reps.items():
            lo, hi = rep.interval
            curves.append((c, m, rep.success_rate, lo, hi))
    reports = by_count[cfg.n_train_tasks]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(results_csv(reports), encoding="utf-8")
        report = {"config": cfg.to_dict(), "methods": {m: r.summary() for m, r in reports.items()}}
        save_json(report, out / "report.json")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n_train_tasks", "method", "success_rate", "ci_low", "ci_high"))
        for c, m, rate, lo, hi in curves:
            w.writerow((c, m, f"{rate:.6f}", f"{lo:.6f}", f"{hi:.6f}"))
        (out / "curves.csv").write_text(buf.getvalue(), encoding="utf-8")
    return reports
