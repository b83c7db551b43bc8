"""Knowledge-graph grounded task planning and replanning for robot teams."""
from .graph import (
    GraphConfig,
    GraphDelta,
    KnowledgeGraph,
    SubgraphKind,
    Triple,
    apply_delta,
    check_consistency,
    deserialize,
    insert,
    query,
    serialize,
)
from .planner import PartialOrderPlan, Plan, PlanNotFound, PlannerConfig, deorder, plan, solve, validate
from .vocab import household_domain

__version__ = "0.1.0"

__all__ = [
    "GraphConfig", "GraphDelta", "KnowledgeGraph", "PartialOrderPlan", "Plan", "PlanNotFound", "PlannerConfig",
    "SubgraphKind", "Triple", "apply_delta", "check_consistency", "deorder", "deserialize", "household_domain",
    "insert", "plan", "query", "serialize", "solve", "validate",
]
