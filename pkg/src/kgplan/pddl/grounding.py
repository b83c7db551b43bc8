"""Grounding by relaxed reachability with static-predicate compilation."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterator, Mapping

from .model import (
    ActionSchema,
    Atom,
    Domain,
    GroundAction,
    PddlError,
    Problem,
    UnreachableGoalAtom,
    validate_problem,
)


@dataclass(frozen=True)
class GroundedTask:
    atoms: frozenset[Atom]
    actions: tuple[GroundAction, ...]
    init: frozenset[Atom]
    goal: frozenset[Atom]
    static_atoms: frozenset[Atom] = frozenset()

    def __post_init__(self):
        if not self.init <= self.atoms:
            raise PddlError("init is not contained in the atom universe")
        if not self.goal <= self.atoms:
            raise UnreachableGoalAtom("goal is not contained in the atom universe")


def object_typing(domain: Domain, problem: Problem) -> dict[str, str]:
    typing = dict(domain.constants)
    typing.update(problem.objects)
    return typing


def objects_by_type(domain: Domain, typing: Mapping[str, str]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {t: [] for t in domain.all_types()}
    for obj in sorted(typing):
        for t in out:
            if domain.is_subtype(typing[obj], t):
                out[t].append(obj)
    return out


def instantiate(schema: ActionSchema, args, static_predicates=frozenset()) -> GroundAction:
    """Ground ``schema`` with positional ``args``; static preconditions are dropped."""
    binding = dict(zip(schema.param_names, args))
    pre = frozenset(a.substitute(binding) for a in schema.precondition if a.predicate not in static_predicates)
    add = frozenset(a.substitute(binding) for a in schema.add_list)
    dele = frozenset(a.substitute(binding) for a in schema.delete_list)
    return GroundAction(schema.name, tuple(args), pre, add, dele)


def _bindings(schema: ActionSchema, facts: Mapping[str, set], objs: Mapping[str, list[str]]) -> Iterator[dict]:
    """Every binding whose preconditions all lie in ``facts`` (indexed by predicate)."""
    ptype = dict(schema.params)
    typed = {p: set(objs[t]) for p, t in schema.params}
    # most-constrained atoms first: those sharing variables with earlier ones, smallest relations
    pre = sorted(schema.precondition, key=lambda a: (len(facts.get(a.predicate, ())), str(a)))

    def extend(i: int, binding: dict):
        if i == len(pre):
            free = [p for p in schema.param_names if p not in binding]
            yield from _enumerate_free(free, binding)
            return
        lit = pre[i]
        for fact in facts.get(lit.predicate, ()):
            new = dict(binding)
            ok = True
            for var, val in zip(lit.args, fact):
                if var.startswith("?"):
                    if var in new:
                        if new[var] != val:
                            ok = False
                            break
                    elif val in typed[var]:
                        new[var] = val
                    else:
                        ok = False
                        break
                elif var != val:
                    ok = False
                    break
            if ok:
                yield from extend(i + 1, new)

    def _enumerate_free(free, binding):
        if not free:
            yield binding
            return
        head, rest = free[0], free[1:]
        for val in objs[ptype[head]]:
            yield from _enumerate_free(rest, {**binding, head: val})

    yield from extend(0, {})


def ground(domain: Domain, problem: Problem) -> GroundedTask:
    typing = object_typing(domain, problem)
    # checked before general validation so an undeclared goal object gets the specific error
    for g in sorted(problem.goal):
        missing = [a for a in g.args if a not in typing]
        if missing:
            raise UnreachableGoalAtom(f"goal atom {g} mentions undeclared object {missing[0]}")
    validate_problem(domain, problem)
    objs = objects_by_type(domain, typing)
    static = domain.static_predicates

    reached: set[Atom] = set(problem.init)
    facts: dict[str, set] = defaultdict(set)
    for a in reached:
        facts[a.predicate].add(a.args)
    actions: dict[tuple, GroundAction] = {}
    changed = True
    while changed:
        changed = False
        for name in sorted(domain.actions):
            schema = domain.actions[name]
            # materialize first: new facts must not appear mid-join
            for binding in list(_bindings(schema, facts, objs)):
                args = tuple(binding[p] for p in schema.param_names)
                key = (name, args)
                if key in actions:
                    continue
                ga = instantiate(schema, args, static)
                actions[key] = ga
                for a in ga.add:
                    if a not in reached:
                        reached.add(a)
                        facts[a.predicate].add(a.args)
                        changed = True
    ordered = tuple(actions[k] for k in sorted(actions))
    statics = frozenset(a for a in problem.init if a.predicate in static)
    universe = frozenset(reached) | problem.goal
    return GroundedTask(universe, ordered, frozenset(problem.init), frozenset(problem.goal), statics)
