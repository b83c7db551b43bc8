from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping


class PddlError(ValueError):
    """Base class for every PDDL modelling / parsing error."""


class PddlSyntaxError(PddlError):
    def __init__(self, line: int, col: int, expected: str, found: str | None = None):
        msg = f"line {line}, col {col}: expected {expected}"
        if found is not None:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.line, self.col, self.expected, self.found = line, col, expected, found


class ArityMismatch(PddlError):
    pass


class UnknownPredicate(PddlError):
    pass


class UnknownType(PddlError):
    pass


class UnknownObject(PddlError):
    pass


class UnsupportedFeature(PddlError):
    pass


class InapplicableAction(PddlError):
    pass


class UnreachableGoalAtom(PddlError):
    pass


ROOT_TYPE = "object"


@dataclass(frozen=True, order=True)
class Atom:
    """Positive literal; arguments are constants or ``?variables``."""

    predicate: str
    args: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    @property
    def is_ground(self) -> bool:
        return not any(a.startswith("?") for a in self.args)

    def substitute(self, binding: Mapping[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate, *self.args)) + ")"

    def __repr__(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"


def atom(predicate: str, *args: str) -> Atom:
    return Atom(predicate, tuple(args))


Params = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    params: Params = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(tuple(p) for p in self.params))
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise PddlError(f"duplicate parameter name in predicate {self.name}")

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: Params
    precondition: frozenset[Atom] = frozenset()
    add_list: frozenset[Atom] = frozenset()
    delete_list: frozenset[Atom] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(tuple(p) for p in self.params))
        for name in ("precondition", "add_list", "delete_list"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise PddlError(f"duplicate parameter name in action {self.name}")
        if self.add_list & self.delete_list:
            raise PddlError(f"action {self.name}: add and delete lists overlap")
        declared = set(names)
        for a in self.precondition | self.add_list | self.delete_list:
            for arg in a.args:
                if arg.startswith("?") and arg not in declared:
                    raise PddlError(f"action {self.name}: undeclared variable {arg}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.params)


@dataclass(frozen=True)
class Domain:
    name: str
    types: Mapping[str, str] = field(default_factory=dict)  # type -> parent
    predicates: Mapping[str, PredicateSchema] = field(default_factory=dict)
    actions: Mapping[str, ActionSchema] = field(default_factory=dict)
    constants: Mapping[str, str] = field(default_factory=dict)  # name -> type
    requirements: tuple[str, ...] = (":strips", ":typing")

    def __post_init__(self):
        for name in ("types", "predicates", "actions", "constants"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))
        validate_domain(self)

    def __eq__(self, other):
        if not isinstance(other, Domain):
            return NotImplemented
        return (self.name, dict(self.types), dict(self.predicates), dict(self.actions),
                dict(self.constants), tuple(sorted(self.requirements))) == (
            other.name, dict(other.types), dict(other.predicates), dict(other.actions),
            dict(other.constants), tuple(sorted(other.requirements)))

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.actions))))

    def all_types(self) -> set[str]:
        return {ROOT_TYPE, *self.types}

    def is_subtype(self, child: str, parent: str) -> bool:
        seen = set()
        while child not in seen:
            if child == parent:
                return True
            seen.add(child)
            if child == ROOT_TYPE:
                return False
            child = self.types.get(child, ROOT_TYPE)
        raise PddlError(f"cyclic type hierarchy at {child}")

    @property
    def static_predicates(self) -> frozenset[str]:
        changing = {a.predicate for s in self.actions.values() for a in s.add_list | s.delete_list}
        return frozenset(p for p in self.predicates if p not in changing)


def validate_domain(d: Domain) -> None:
    known = d.all_types()
    for t, parent in d.types.items():
        if parent not in known:
            raise UnknownType(f"type {t} has undeclared parent {parent}")
        d.is_subtype(t, ROOT_TYPE)  # cycle check
    for c, t in d.constants.items():
        if t not in known:
            raise UnknownType(f"constant {c} has undeclared type {t}")
    for p in d.predicates.values():
        for _, t in p.params:
            if t not in known:
                raise UnknownType(f"predicate {p.name} uses undeclared type {t}")
    for a in d.actions.values():
        ptypes = dict(a.params)
        for _, t in a.params:
            if t not in known:
                raise UnknownType(f"action {a.name} uses undeclared type {t}")
        for lit in a.precondition | a.add_list | a.delete_list:
            schema = d.predicates.get(lit.predicate)
            if schema is None:
                raise UnknownPredicate(f"action {a.name} references undeclared predicate {lit.predicate}")
            if len(lit.args) != schema.arity:
                raise ArityMismatch(
                    f"action {a.name}: {lit.predicate} expects {schema.arity} arguments, got {len(lit.args)}")
            for arg, (_, want) in zip(lit.args, schema.params):
                have = ptypes[arg] if arg.startswith("?") else d.constants.get(arg)
                if have is None:
                    raise UnknownObject(f"action {a.name}: unknown constant {arg}")
                if not (d.is_subtype(have, want) or d.is_subtype(want, have)):
                    raise UnknownType(f"action {a.name}: {arg} of type {have} does not fit {want} in {lit.predicate}")


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: Mapping[str, str]  # name -> type
    init: frozenset[Atom]
    goal: frozenset[Atom]

    def __post_init__(self):
        object.__setattr__(self, "objects", MappingProxyType(dict(self.objects)))
        object.__setattr__(self, "init", frozenset(self.init))
        object.__setattr__(self, "goal", frozenset(self.goal))
        if not self.goal:
            raise PddlError("problem goal must contain at least one literal")
        for a in self.init | self.goal:
            if not a.is_ground:
                raise PddlError(f"problem atom {a} is not ground")

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        return (self.name, self.domain_name, dict(self.objects), self.init, self.goal) == (
            other.name, other.domain_name, dict(other.objects), other.init, other.goal)

    def __hash__(self):
        return hash((self.name, self.init, self.goal))


def validate_problem(domain: Domain, problem: Problem) -> None:
    """Cross-check a problem against its domain (types, predicates, arities)."""
    if problem.domain_name != domain.name:
        raise PddlError(f"problem is for domain {problem.domain_name}, not {domain.name}")
    known = domain.all_types()
    typing = dict(domain.constants)
    for obj, t in problem.objects.items():
        if t not in known:
            raise UnknownType(f"object {obj} has undeclared type {t}")
        if obj in domain.constants and domain.constants[obj] != t:
            raise PddlError(f"object {obj} redeclares domain constant with type {t}")
        typing[obj] = t
    for section, atoms in (("init", problem.init), ("goal", problem.goal)):
        for a in atoms:
            check_ground_atom(domain, typing, a, section)


def check_ground_atom(domain: Domain, typing: Mapping[str, str], a: Atom, where: str = "") -> None:
    schema = domain.predicates.get(a.predicate)
    if schema is None:
        raise UnknownPredicate(f"{where}: undeclared predicate {a.predicate} in {a}")
    if len(a.args) != schema.arity:
        raise ArityMismatch(f"{where}: {a.predicate} expects {schema.arity} arguments, got {len(a.args)} in {a}")
    for arg, (_, want) in zip(a.args, schema.params):
        have = typing.get(arg)
        if have is None:
            raise UnknownObject(f"{where}: undeclared object {arg} in {a}")
        if not domain.is_subtype(have, want):
            raise UnknownType(f"{where}: {arg} of type {have} is not a {want} in {a}")


@dataclass(frozen=True, order=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre: frozenset[Atom] = field(default=frozenset(), compare=False)
    add: frozenset[Atom] = field(default=frozenset(), compare=False)
    delete: frozenset[Atom] = field(default=frozenset(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        add = frozenset(self.add)
        object.__setattr__(self, "pre", frozenset(self.pre))
        object.__setattr__(self, "add", add)
        # add wins over delete when a binding makes them collide
        object.__setattr__(self, "delete", frozenset(self.delete) - add)

    def __str__(self) -> str:
        return "(" + " ".join((self.name, *self.args)) + ")"

    def __repr__(self) -> str:
        return f"{self.name}({', '.join(self.args)})"


State = frozenset  # of Atom


def applicable(state: State, action: GroundAction) -> bool:
    return action.pre <= state


def apply(state: State, action: GroundAction) -> State:
    if not action.pre <= state:
        missing = ", ".join(map(str, sorted(action.pre - state)))
        raise InapplicableAction(f"{action} is not applicable: missing {missing}")
    return (state - action.delete) | action.add


def goal_satisfied(state: State, goal) -> bool:
    """True iff every goal atom holds. ``goal`` may be a Problem or an atom set."""
    atoms = goal.goal if isinstance(goal, Problem) else goal
    return frozenset(atoms) <= state
