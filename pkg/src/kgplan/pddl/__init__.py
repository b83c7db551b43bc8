"""STRIPS + typing PDDL: data model, parser, canonical printer and grounder."""
from .grounding import GroundedTask, ground, instantiate
from .model import (
    ActionSchema,
    ArityMismatch,
    Atom,
    Domain,
    GroundAction,
    InapplicableAction,
    PddlError,
    PddlSyntaxError,
    PredicateSchema,
    Problem,
    State,
    UnknownObject,
    UnknownPredicate,
    UnknownType,
    UnreachableGoalAtom,
    UnsupportedFeature,
    applicable,
    apply,
    atom,
    check_ground_atom,
    goal_satisfied,
    validate_problem,
)
from .parser import parse_domain, parse_problem
from .printer import print_domain, print_problem

__all__ = [
    "ActionSchema", "ArityMismatch", "Atom", "Domain", "GroundAction", "GroundedTask",
    "InapplicableAction", "PddlError", "PddlSyntaxError", "PredicateSchema", "Problem", "State",
    "UnknownObject", "UnknownPredicate", "UnknownType", "UnreachableGoalAtom", "UnsupportedFeature",
    "applicable", "apply", "atom", "check_ground_atom", "goal_satisfied", "ground", "instantiate",
    "parse_domain", "parse_problem", "print_domain", "print_problem", "validate_problem",
]
