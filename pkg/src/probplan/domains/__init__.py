from .base import (
    BLOCK_SIZE,
    ContinuousState,
    Demonstration,
    Env,
    TaskSpec,
    WorldState,
    aligned_symbolic_states,
    bundled_domain_path,
    check_success,
    demo_from_dict,
    demo_to_dict,
    execute,
    gen_demo,
    load_bundled_domain,
    load_tasks,
    save_tasks,
    task_from_dict,
    task_to_dict,
)
from .sorting import SortingEnv, displaced_initial, gen_sorting_task, sorting_env
from .stacking import StackingEnv, gen_stacking_task, stacking_env


def get_env(domain: str, **params) -> Env:
    if domain == "stacking":
        return stacking_env(**params)
    if domain == "sorting":
        return sorting_env(**params)
    raise ValueError(f"unknown domain {domain!r}")


__all__ = [
    "BLOCK_SIZE",
    "ContinuousState",
    "Demonstration",
    "Env",
    "SortingEnv",
    "StackingEnv",
    "TaskSpec",
    "WorldState",
    "aligned_symbolic_states",
    "bundled_domain_path",
    "check_success",
    "demo_from_dict",
    "demo_to_dict",
    "displaced_initial",
    "execute",
    "gen_demo",
    "gen_sorting_task",
    "gen_stacking_task",
    "get_env",
    "load_bundled_domain",
    "load_tasks",
    "save_tasks",
    "sorting_env",
    "stacking_env",
    "task_from_dict",
    "task_to_dict",
]
