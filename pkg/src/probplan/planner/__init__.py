from .baselines import (
    WrongDomainError,
    blocksworld_rule_violations,
    discretize_map,
    is_valid_blocksworld,
    is_valid_sorting,
    rectify,
    rectify_blocksworld,
    rectify_sorting,
)
from .search import (
    BUDGET_EXHAUSTED,
    MATCHED,
    NO_IMPROVEMENT,
    PlanResult,
    SearchConfig,
    continuous_plan,
    plan_to_json,
    symbolic_plan,
)

__all__ = [
    "BUDGET_EXHAUSTED",
    "MATCHED",
    "NO_IMPROVEMENT",
    "PlanResult",
    "SearchConfig",
    "WrongDomainError",
    "blocksworld_rule_violations",
    "continuous_plan",
    "discretize_map",
    "is_valid_blocksworld",
    "is_valid_sorting",
    "plan_to_json",
    "rectify",
    "rectify_blocksworld",
    "rectify_sorting",
    "symbolic_plan",
]
