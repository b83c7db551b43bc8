"""Mapping between knowledge-graph triples and PDDL atoms of the household domain."""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .graph import SubgraphKind, Triple
from .pddl import Atom, Domain, parse_domain

RELATION_PREDICATES = frozenset({"in", "on", "holding"})
REACH_PREDICATES = frozenset({"at_location", "connected"})
PROPERTY_PREDICATES = frozenset({"has_capability", "has_state"})
AFFORDANCES = frozenset({"openable", "toggleable", "sliceable", "container", "surface"})
HAS_PROPERTY = "has_property"

CAPABILITIES = ("open_close", "pickup", "slice", "toggle")
STATES = ("closed", "hand_empty", "off", "on", "open", "sliced")

# capability a robot needs for each built-in action (goto needs none)
REQUIRED_CAPABILITY = {
    "pickup": "pickup",
    "put_in": "pickup",
    "put_on": "pickup",
    "open": "open_close",
    "close": "open_close",
    "toggle_on": "toggle",
    "toggle_off": "toggle",
    "slice": "slice",
}

# affordance that lets an entity leave a given state
ENABLING_AFFORDANCE = {"closed": "openable", "open": "openable", "off": "toggleable", "on": "toggleable"}

# affordance implied by the goal relation or goal state
GOAL_AFFORDANCE = {"in": "container", "on": "surface"}
GOAL_STATE_AFFORDANCE = {"open": "openable", "closed": "openable", "on": "toggleable",
                         "off": "toggleable", "sliced": "sliceable"}


@lru_cache(maxsize=1)
def household_domain() -> Domain:
    text = resources.files("kgplan.data").joinpath("household.pddl").read_text()
    return parse_domain(text)


def kind_of_relation(relation: str) -> SubgraphKind:
    if relation in RELATION_PREDICATES:
        return SubgraphKind.RELATION
    if relation in REACH_PREDICATES or relation == "is_a":
        return SubgraphKind.REACH
    return SubgraphKind.PROPERTY


def triple_to_atom(t: Triple) -> Atom:
    if t.relation == HAS_PROPERTY:
        return Atom(t.object, (t.subject,))
    return Atom(t.relation, (t.subject, t.object))


def atom_to_triple(a: Atom) -> tuple[SubgraphKind, Triple]:
    if len(a.args) == 1:
        return SubgraphKind.PROPERTY, Triple(a.args[0], HAS_PROPERTY, a.predicate)
    if len(a.args) != 2:
        raise ValueError(f"atom {a} has no triple form")
    return kind_of_relation(a.predicate), Triple(a.args[0], a.predicate, a.args[1])


def literals(domain: Domain | None = None) -> frozenset[str]:
    """Tokens that are values (states, capabilities), not entities."""
    d = domain or household_domain()
    return frozenset(d.constants)


def atom_entities(atoms, domain: Domain | None = None) -> set[str]:
    lits = literals(domain)
    return {arg for a in atoms for arg in a.args if arg not in lits}
