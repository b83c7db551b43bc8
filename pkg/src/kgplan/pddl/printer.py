"""Canonical PDDL printing: sorted sections, two-space indent, lowercase."""
from __future__ import annotations

from .model import ActionSchema, Atom, Domain, PddlError, Problem

INDENT = "  "


def _typed(pairs) -> str:
    return " ".join(f"{n} - {t}" for n, t in pairs)


def _atoms_block(atoms, depth: int, negated=()) -> list[str]:
    pad = INDENT * depth
    lines = [pad + str(a) for a in sorted(atoms)]
    lines += [pad + f"(not {a})" for a in sorted(negated)]
    return lines


def _action(a: ActionSchema) -> list[str]:
    lines = [f"{INDENT}(:action {a.name}", f"{INDENT * 2}:parameters ({_typed(a.params)})"]
    if a.precondition:
        lines.append(f"{INDENT * 2}:precondition (and")
        lines += _atoms_block(a.precondition, 3)
        lines.append(f"{INDENT * 2})")
    else:
        lines.append(f"{INDENT * 2}:precondition (and)")
    if a.add_list or a.delete_list:
        lines.append(f"{INDENT * 2}:effect (and")
        lines += _atoms_block(a.add_list, 3, a.delete_list)
        lines.append(f"{INDENT * 2})")
    else:
        lines.append(f"{INDENT * 2}:effect (and)")
    lines.append(f"{INDENT})")
    return lines


def print_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})",
             f"{INDENT}(:requirements {' '.join(sorted(domain.requirements))})"]
    if domain.types:
        lines.append(f"{INDENT}(:types")
        lines += [f"{INDENT * 2}{t} - {p}" for t, p in sorted(domain.types.items())]
        lines.append(f"{INDENT})")
    if domain.constants:
        lines.append(f"{INDENT}(:constants")
        lines += [f"{INDENT * 2}{c} - {t}" for c, t in sorted(domain.constants.items())]
        lines.append(f"{INDENT})")
    lines.append(f"{INDENT}(:predicates")
    for name in sorted(domain.predicates):
        p = domain.predicates[name]
        inner = " ".join([name] + [f"{n} - {t}" for n, t in p.params])
        lines.append(f"{INDENT * 2}({inner})")
    lines.append(f"{INDENT})")
    for name in sorted(domain.actions):
        lines += _action(domain.actions[name])
    lines.append(")")
    return "\n".join(lines).lower() + "\n"


def print_problem(problem: Problem) -> str:
    if not problem.goal:
        raise PddlError("cannot print a problem without goal literals")
    lines = [f"(define (problem {problem.name})", f"{INDENT}(:domain {problem.domain_name})"]
    lines.append(f"{INDENT}(:objects")
    lines += [f"{INDENT * 2}{o} - {t}" for o, t in sorted(problem.objects.items())]
    lines.append(f"{INDENT})")
    lines.append(f"{INDENT}(:init")
    lines += _atoms_block(problem.init, 2)
    lines.append(f"{INDENT})")
    lines.append(f"{INDENT}(:goal (and")
    lines += _atoms_block(problem.goal, 2)
    lines.append(f"{INDENT}))")
    lines.append(")")
    return "\n".join(lines).lower() + "\n"


def format_atom(a: Atom) -> str:
    return str(a)
