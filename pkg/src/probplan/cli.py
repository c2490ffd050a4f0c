"""Command-line entry point: ``probplan <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from pathlib import Path

from . import __version__
from .belief import belief_from_json
from .checks import oracle_check
from .domains import (
    bundled_domain_path,
    demo_from_dict,
    demo_to_dict,
    gen_demo,
    gen_sorting_task,
    gen_stacking_task,
    load_tasks,
    save_tasks,
)
from .domains.base import save_json
from .harness import SEED_ENV, ExperimentConfig, run_experiment, run_training
from .pddl import PddlError, ProblemDef, ground_problem, parse_domain, parse_problem
from .planner import SearchConfig, continuous_plan, symbolic_plan

log = logging.getLogger("probplan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- helpers ------------------------------------------------------------------


def resolve_domain_file(name: str) -> Path:
    """An existing path, else a bundled domain matched by file stem."""
    p = Path(name)
    if p.exists():
        return p
    bundled = bundled_domain_path(p.stem)
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"no such domain file: {name}")


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_problem(args) -> tuple:
    domain = parse_domain(_read(resolve_domain_file(args.domain)))
    if args.problem:
        problem = parse_problem(_read(args.problem), domain)
    elif getattr(args, "objects", None):
        default = domain.types[0][0] if domain.types else "object"
        objs = tuple(tuple(o.split(":", 1)) if ":" in o else (o, default) for o in args.objects)
        problem = ProblemDef("cli", domain.name, objs, (), ())
    else:
        raise UsageError("give --problem or --objects")
    return domain, problem, ground_problem(domain, problem)


def _search_config(args) -> SearchConfig:
    kw = {}
    for flag, key in (("max_depth", "max_depth"), ("budget", "node_budget"), ("tolerance", "goal_tolerance")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    if getattr(args, "weighted", False):
        kw["weighted_goal"] = True
    return SearchConfig(**kw)


def _out_dir(args) -> Path:
    return Path(args.out or ".")


def _experiment_config(args, **overrides) -> ExperimentConfig:
    data = json.loads(_read(args.config)) if args.config else {}
    cfg = ExperimentConfig.from_dict(data)
    if args.seed is not None:
        overrides.setdefault("seed", args.seed)
    return cfg.with_(**overrides) if overrides else cfg


# -- commands ---------------------------------------------------------------------


def cmd_parse(args) -> int:
    domain = parse_domain(_read(resolve_domain_file(args.file)))
    print(f"domain {domain.name}")
    print(f"  requirements: {' '.join(domain.requirements) or '-'}")
    print(f"  types: {' '.join(t for t, _ in domain.types) or '-'}")
    for p in domain.predicates:
        print(f"  predicate {p.name}/{p.arity}")
    for op in domain.operators:
        print(
            f"  operator {op.name}/{len(op.parameters)}: "
            f"{len(op.precondition)} pre, {len(op.add_effects)} add, {len(op.delete_effects)} del"
        )
    if args.problem:
        problem = parse_problem(_read(args.problem), domain)
        g = ground_problem(domain, problem)
        print(f"problem {problem.name}: {len(problem.objects)} objects, {len(g.universe)} atoms, {len(g.actions)} actions")
    return 0


def cmd_plan(args) -> int:
    _, problem, g = _load_problem(args)
    if not problem.goal:
        raise UsageError("the problem declares no goal")
    res = symbolic_plan(g.init, g.goal, g.actions, _search_config(args), g.universe)
    print(res.to_json())
    return 0


def cmd_cplan(args) -> int:
    _, _, g = _load_problem(args)
    init = belief_from_json(_read(args.init), g.universe)
    goal = belief_from_json(_read(args.goal), g.universe)
    res = continuous_plan(init, goal, g.actions, _search_config(args))
    print(res.to_json())
    return 0


def cmd_gen_tasks(args) -> int:
    seed = args.seed if args.seed is not None else 0
    tasks = []
    for i in range(args.n):
        s = seed + i
        if args.domain == "stacking":
            tasks.append(gen_stacking_task(args.n_blocks, s, task_id=f"{args.split}-{i:04d}"))
        else:
            tasks.append(
                gen_sorting_task(
                    args.n_objects, args.n_categories, s, args.n_containers, args.alternative, f"{args.split}-{i:04d}"
                )
            )
    paths = save_tasks(tasks, _out_dir(args), args.split)
    print(f"wrote {len(paths)} tasks under {_out_dir(args) / 'tasks' / args.domain / args.split}")
    return 0


def cmd_gen_demos(args) -> int:
    root = _out_dir(args)
    tasks = load_tasks(root, args.domain, args.split)
    if not tasks:
        raise UsageError(f"no tasks found under {root / 'tasks' / args.domain / args.split}")
    for t in tasks:
        demo = gen_demo(t, _search_config(args))
        save_json(demo_to_dict(demo), root / "demos" / t.domain / args.split / f"{t.id}.json")
        assert demo_from_dict(demo_to_dict(demo)).actions == demo.actions
    print(f"wrote {len(tasks)} demonstrations under {root / 'demos' / args.domain / args.split}")
    return 0


def cmd_train_sgn(args) -> int:
    cfg = _experiment_config(args)
    grounding = {**cfg.grounding, "kind": "sgn"}
    grounding.pop("checkpoint", None)
    train = dict(cfg.train)
    if args.epochs is not None:
        train["epochs"] = args.epochs
    cfg = cfg.with_(grounding=grounding, train=train)
    out = _out_dir(args)
    model = run_training(cfg, out)
    print(f"checkpoint {out / 'sgn.ckpt'} ({model.model.n_params} parameters)")
    return 0


def cmd_eval(args) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(args)
    reports = run_experiment(cfg, out_dir=out)
    for m, r in reports.items():
        lo, hi = r.interval
        print(f"{m:<11} {r.successes:>4}/{r.n:<4} success {r.success_rate:.3f}  95% CI [{lo:.3f}, {hi:.3f}]")
    print(f"results in {out / 'results.csv'}")
    return 0


def cmd_oracle_check(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rep = oracle_check(args.trials, args.max_atoms, seed)
    print(
        json.dumps(
            {"trials": rep.trials, "max_error": rep.max_error, "out_of_range": rep.out_of_range, "ok": rep.ok(args.tol)}
        )
    )
    return 0 if rep.ok(args.tol) else 2


# -- parser -------------------------------------------------------------------


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base random seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config JSON")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = _Parser(prog="probplan", description="Planning over factored belief states.", parents=[common])
    parser.add_argument("--version", action="version", version=f"probplan {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(fn=fn)
        return p

    def search_flags(p):
        p.add_argument("--max-depth", type=int)
        p.add_argument("--budget", type=int, help="node expansion budget")

    p = add("parse", cmd_parse, "validate a PDDL domain (and optional problem)")
    p.add_argument("file")
    p.add_argument("--problem")

    p = add("plan", cmd_plan, "classical plan for a PDDL problem")
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)
    search_flags(p)

    p = add("cplan", cmd_cplan, "belief-space plan between two belief JSON files")
    p.add_argument("--domain", required=True)
    p.add_argument("--problem")
    p.add_argument("--objects", nargs="+", help="objects as name or name:type when no problem file is given")
    p.add_argument("--init", required=True)
    p.add_argument("--goal", required=True)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--weighted", action="store_true", help="weight goal atoms by confidence")
    search_flags(p)

    p = add("gen-tasks", cmd_gen_tasks, "generate benchmark tasks as JSON")
    p.add_argument("--domain", choices=("stacking", "sorting"), default="stacking")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--split", default="test")
    p.add_argument("--n-blocks", type=int, default=8)
    p.add_argument("--n-objects", type=int, default=8)
    p.add_argument("--n-categories", type=int, default=4)
    p.add_argument("--n-containers", type=int, default=4)
    p.add_argument("--alternative", action="store_true", help="sorting tasks start with items misplaced")

    p = add("gen-demos", cmd_gen_demos, "solve saved tasks and record demonstrations")
    p.add_argument("--domain", choices=("stacking", "sorting"), default="stacking")
    p.add_argument("--split", default="test")
    search_flags(p)

    p = add("train-sgn", cmd_train_sgn, "train the grounding network on generated demonstrations")
    p.add_argument("--epochs", type=int)

    add("eval", cmd_eval, "run a paired method comparison")

    p = add("oracle-check", cmd_oracle_check, "compare belief updates with exact enumeration")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--max-atoms", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-12)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for k in ("seed", "config", "out"):
            if not hasattr(args, k):
                setattr(args, k, None)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("probplan: a command is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        if args.seed is None and os.environ.get(SEED_ENV) and args.command in ("gen-tasks", "oracle-check"):
            args.seed = int(os.environ[SEED_ENV])
        return args.fn(args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (PddlError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError, ValueError) as e:
        print(f"probplan: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help and --version
        return int(e.code or 0)
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
