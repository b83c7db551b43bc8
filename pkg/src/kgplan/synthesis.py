"""Staged problem synthesis: goal, relations, properties, reachability, problem.

Each stage is served by a proposer. ``RuleBasedProposer`` is deterministic and
is what the tests and the benchmark use; ``RemoteProposer`` sends a templated
prompt to a model endpoint and parses the reply in the graph text format.
"""
from __future__ import annotations

import json
import logging
import os
import re
import urllib.request
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Mapping, Protocol

from .graph import KnowledgeGraph, SubgraphKind, Triple, normalize_token
from .pddl import Atom, Domain, PddlError, Problem, check_ground_atom, validate_problem
from .vocab import (
    CAPABILITIES,
    GOAL_AFFORDANCE,
    atom_entities,
    atom_to_triple,
    household_domain,
    literals,
    triple_to_atom,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

UNKNOWN_LOCATION = "unknown_location"


class SynthesisError(Exception):
    """Base class for stage failures."""


class UngroundableGoal(SynthesisError):
    pass


class MissingLocation(SynthesisError):
    def __init__(self, entity: str):
        super().__init__(f"no location known for {entity}")
        self.entity = entity


class SchemaMismatch(SynthesisError):
    pass


class TypeAssignmentMissing(SynthesisError):
    def __init__(self, entity: str):
        super().__init__(f"no PDDL type assigned to {entity}")
        self.entity = entity


class InconsistentBundle(SynthesisError):
    pass


@dataclass(frozen=True)
class TaskDescription:
    text: str
    structured_goal: tuple[Triple, ...] | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("task text must be non-empty")
        if self.structured_goal is not None:
            object.__setattr__(self, "structured_goal", tuple(Triple.of(*t) for t in self.structured_goal))


@dataclass(frozen=True)
class GoalSpec:
    goal_triples: tuple[Triple, ...]

    def __post_init__(self):
        if not self.goal_triples:
            raise UngroundableGoal("goal must contain at least one triple")

    def atoms(self) -> frozenset[Atom]:
        return frozenset(triple_to_atom(t) for t in self.goal_triples)

    def entities(self, lits: frozenset[str] | None = None) -> set[str]:
        lits = literals() if lits is None else lits
        return {x for t in self.goal_triples for x in (t.subject, t.object) if x not in lits}

    def subjects(self) -> set[str]:
        return {t.subject for t in self.goal_triples}


@dataclass(frozen=True)
class PredicateBundle:
    relation_atoms: frozenset[Atom] = frozenset()
    property_atoms: frozenset[Atom] = frozenset()
    reach_atoms: frozenset[Atom] = frozenset()
    # atoms supplied by a fallback prior because the matching subgraph was withheld
    prior_atoms: frozenset[Atom] = frozenset()

    def init(self) -> frozenset[Atom]:
        return self.relation_atoms | self.property_atoms | self.reach_atoms


@dataclass(frozen=True)
class Inventory:
    """Object inventory: entity name -> PDDL type (robots, locations included)."""

    types: Mapping[str, str]

    @property
    def robots(self) -> list[str]:
        return sorted(e for e, t in self.types.items() if t == "robot")

    def __contains__(self, name: str) -> bool:
        return name in self.types

    def __iter__(self):
        return iter(sorted(self.types))

    def __len__(self) -> int:
        return len(self.types)


# ---------------------------------------------------------------- lexicon

@dataclass(frozen=True)
class GoalTemplate:
    name: str
    pattern: re.Pattern
    triples: tuple[tuple[str, str, str], ...]


@dataclass(frozen=True)
class GoalLexicon:
    templates: tuple[GoalTemplate, ...]
    verbs: frozenset[str]

    @classmethod
    def from_toml(cls, text: str) -> "GoalLexicon":
        data = tomllib.loads(text)
        templates = tuple(
            GoalTemplate(t["name"], re.compile(t["pattern"]), tuple(tuple(x) for x in t["triples"]))
            for t in data.get("template", [])
        )
        return cls(templates, frozenset(data.get("verbs", [])))


@lru_cache(maxsize=1)
def default_lexicon() -> GoalLexicon:
    return GoalLexicon.from_toml(resources.files("kgplan.data").joinpath("goal_lexicon.toml").read_text())


_ARTICLES = re.compile(r"\b(?:the|a|an|some|both)\b\s*")


def _split_clauses(text: str, verbs: frozenset[str]) -> list[str]:
    text = text.lower().strip()
    pieces = re.split(r"[.;,!?]|\bthen\b", text)
    clauses = []
    for piece in pieces:
        words = piece.split()
        if not words:
            continue
        current: list[str] = []
        for i, w in enumerate(words):
            if w == "and" and i + 1 < len(words) and words[i + 1] in verbs and current:
                clauses.append(" ".join(current))
                current = []
                continue
            if w == "and" and not current:
                continue
            current.append(w)
        while current and current[-1] == "and":
            current.pop()
        if current:
            clauses.append(" ".join(current))
    return clauses


def _resolve_entity(phrase: str, inventory: Inventory, last: str | None) -> str | None:
    phrase = _ARTICLES.sub("", phrase).strip()
    if phrase in ("it", "them") and last:
        return last
    token = normalize_token(phrase)
    if token in inventory:
        return token
    for cand in (token.rstrip("s"), token.replace("_", "")):
        if cand in inventory:
            return cand
    return None


def _split_objects(phrase: str) -> list[str]:
    parts = re.split(r",|\band\b", phrase)
    return [p.strip() for p in parts if p.strip()]


# ---------------------------------------------------------------- stages

def _validate_goal(triples: Iterable[Triple], inventory: Inventory, lits: frozenset[str]) -> GoalSpec:
    triples = tuple(triples)
    for t in triples:
        for x in (t.subject, t.object):
            if x not in lits and x not in inventory:
                raise UngroundableGoal(f"goal triple {t} references {x}, which is not in the inventory")
    return GoalSpec(triples)


def extract_goal(task: TaskDescription, inventory: Inventory, *, lexicon: GoalLexicon | None = None,
                 domain: Domain | None = None) -> GoalSpec:
    if not len(inventory):
        raise UngroundableGoal("object inventory is empty")
    lits = literals(domain)
    if task.structured_goal:
        return _validate_goal(task.structured_goal, inventory, lits)
    lexicon = lexicon or default_lexicon()
    triples: list[Triple] = []
    last: str | None = None
    for clause in _split_clauses(task.text, lexicon.verbs):
        for tpl in lexicon.templates:
            m = tpl.pattern.match(clause)
            if not m:
                continue
            groups = m.groupdict()
            objects = groups.get("objects") or groups.get("objects2")
            names = []
            for phrase in _split_objects(objects or ""):
                name = _resolve_entity(phrase, inventory, last)
                if name is None:
                    raise UngroundableGoal(f"cannot ground {phrase!r} in {clause!r}")
                names.append(name)
            target = None
            if groups.get("target"):
                target = _resolve_entity(groups["target"], inventory, last)
                if target is None:
                    raise UngroundableGoal(f"cannot ground {groups['target']!r} in {clause!r}")
            for name in names:
                for s, r, o in tpl.triples:
                    triples.append(Triple.of(s.format(object=name, target=target),
                                             r, o.format(object=name, target=target)))
            if names:
                last = names[-1]
            break
    if not triples:
        raise UngroundableGoal(f"no goal template matches {task.text!r}")
    unique = tuple(dict.fromkeys(triples))
    return _validate_goal(unique, inventory, lits)


def extract_relations(goal: GoalSpec, task: TaskDescription, g_rel: Iterable[Triple], *, depth: int = 2,
                      domain: Domain | None = None) -> frozenset[Atom]:
    """Relation triples within ``depth`` hops of a goal entity."""
    triples = sorted(g_rel)
    lits = literals(domain)
    frontier = goal.entities(lits)
    seen_entities = set(frontier)
    selected: set[Triple] = set()
    for _ in range(depth):
        nxt = set()
        for t in triples:
            if t in selected:
                continue
            if t.subject in frontier or t.object in frontier:
                selected.add(t)
                for x in (t.subject, t.object):
                    if x not in seen_entities and x not in lits:
                        nxt.add(x)
        seen_entities |= nxt
        frontier = nxt
        if not frontier:
            break
    return frozenset(triple_to_atom(t) for t in selected)


def extract_properties(goal: GoalSpec, task: TaskDescription, relations: Iterable[Atom],
                       g_prop: Iterable[Triple], *, robots: Iterable[str] = (),
                       domain: Domain | None = None) -> frozenset[Atom]:
    """Robot capabilities/states plus attribute and state facts of mentioned entities."""
    robots = set(robots)
    mentioned = goal.entities(literals(domain)) | atom_entities(relations, domain)
    out = set()
    for t in g_prop:
        if t.subject in robots or t.subject in mentioned:
            out.add(triple_to_atom(t))
    return frozenset(out)


def property_prior(goal: GoalSpec, robots: Iterable[str]) -> frozenset[Atom]:
    """Fallback used when the property subgraph is withheld.

    Assumes every robot can do everything with an empty hand and reads the
    receptacle role of goal targets off the goal relation.
    """
    out = set()
    for r in robots:
        out.update(Atom("has_capability", (r, c)) for c in CAPABILITIES)
        out.add(Atom("has_state", (r, "hand_empty")))
    for t in goal.goal_triples:
        aff = GOAL_AFFORDANCE.get(t.relation)
        if aff:
            out.add(Atom(aff, (t.object,)))
    return frozenset(out)


def _held(relations: Iterable[Atom]) -> set[str]:
    return {a.args[1] for a in relations if a.predicate == "holding"}


def extract_reachability(relations: Iterable[Atom], properties: Iterable[Atom], g_reach: Iterable[Triple], *,
                         robots: Iterable[str] = (), domain: Domain | None = None) -> frozenset[Atom]:
    relations, properties = frozenset(relations), frozenset(properties)
    g_reach = sorted(g_reach)
    locations = {x for t in g_reach if t.relation == "connected" for x in (t.subject, t.object)}
    locations |= {t.subject for t in g_reach if t.relation == "is_a" and t.object == "location"}
    in_scope = (atom_entities(relations | properties, domain) | set(robots)) - locations
    held = _held(relations)
    where = {t.subject: t.object for t in g_reach if t.relation == "at_location"}
    out = set()
    for e in sorted(in_scope):
        if e in held:
            continue
        if e not in where:
            raise MissingLocation(e)
        out.add(Atom("at_location", (e, where[e])))
    out.update(Atom("connected", (t.subject, t.object)) for t in g_reach if t.relation == "connected")
    return frozenset(out)


def reach_prior(relations: Iterable[Atom], properties: Iterable[Atom], *, robots: Iterable[str] = (),
                domain: Domain | None = None) -> frozenset[Atom]:
    """Fallback used when the reach subgraph is withheld: one shared, unnamed place."""
    relations, properties = frozenset(relations), frozenset(properties)
    in_scope = atom_entities(relations | properties, domain) | set(robots)
    held = _held(relations)
    return frozenset(Atom("at_location", (e, UNKNOWN_LOCATION)) for e in sorted(in_scope - held))


def _check_consistent(atoms: Iterable[Atom], exclusive=(frozenset({"open", "closed"}), frozenset({"on", "off"}))):
    states: dict[str, set[str]] = {}
    for a in atoms:
        if a.predicate == "has_state":
            states.setdefault(a.args[0], set()).add(a.args[1])
    for e, vals in sorted(states.items()):
        for ex in exclusive:
            if len(vals & ex) > 1:
                raise InconsistentBundle(f"{e} has exclusive states {sorted(vals & ex)}")


def synthesize_problem(goal: GoalSpec, relations: Iterable[Atom], properties: Iterable[Atom],
                       reach: Iterable[Atom], domain: Domain | None = None, *,
                       types: Mapping[str, str], name: str = "task") -> Problem:
    domain = domain or household_domain()
    init = frozenset(relations) | frozenset(properties) | frozenset(reach)
    goal_atoms = goal.atoms()
    _check_consistent(init)
    for a in sorted(init | goal_atoms):
        schema = domain.predicates.get(a.predicate)
        if schema is None:
            raise SchemaMismatch(f"{a} does not match any predicate of domain {domain.name}")
        if len(a.args) != schema.arity:
            raise SchemaMismatch(f"{a} has {len(a.args)} arguments; {a.predicate} takes {schema.arity}")
    objects = {}
    for x in sorted({arg for a in init | goal_atoms for arg in a.args}):
        if x in domain.constants:
            continue
        t = types.get(x)
        if t is None:
            t = "location" if x == UNKNOWN_LOCATION else None
        if t is None:
            raise TypeAssignmentMissing(x)
        objects[x] = t
    typing = {**domain.constants, **objects}
    for a in sorted(init | goal_atoms):
        try:
            check_ground_atom(domain, typing, a, "problem")
        except PddlError as exc:
            raise SchemaMismatch(str(exc)) from None
    problem = Problem(normalize_token(name) or "task", domain.name, objects, init, goal_atoms)
    validate_problem(domain, problem)
    return problem


# ---------------------------------------------------------------- proposers

class Proposer(Protocol):
    def goal(self, task: TaskDescription, inventory: Inventory) -> GoalSpec: ...

    def relations(self, goal: GoalSpec, task: TaskDescription, g_rel: frozenset[Triple]) -> frozenset[Atom]: ...

    def properties(self, goal: GoalSpec, task: TaskDescription, relations: frozenset[Atom],
                   g_prop: frozenset[Triple], robots: list[str]) -> frozenset[Atom]: ...

    def reach(self, relations: frozenset[Atom], properties: frozenset[Atom], g_reach: frozenset[Triple],
              robots: list[str]) -> frozenset[Atom]: ...


@dataclass
class RuleBasedProposer:
    lexicon: GoalLexicon | None = None
    depth: int = 2
    domain: Domain | None = None

    def goal(self, task, inventory):
        return extract_goal(task, inventory, lexicon=self.lexicon, domain=self.domain)

    def relations(self, goal, task, g_rel):
        return extract_relations(goal, task, g_rel, depth=self.depth, domain=self.domain)

    def properties(self, goal, task, relations, g_prop, robots):
        return extract_properties(goal, task, relations, g_prop, robots=robots, domain=self.domain)

    def reach(self, relations, properties, g_reach, robots):
        return extract_reachability(relations, properties, g_reach, robots=robots, domain=self.domain)


Transport = Callable[[str, dict, float], str]


def http_transport(url: str, payload: dict, timeout: float, token: str | None = None) -> str:
    req = urllib.request.Request(url, data=json.dumps(payload).encode(), method="POST",
                                 headers={"Content-Type": "application/json"})
    if token:
        req.add_header("Authorization", f"Bearer {token}")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        body = resp.read().decode()
    try:
        data = json.loads(body)
    except json.JSONDecodeError:
        return body
    return data.get("text", body) if isinstance(data, dict) else body


def parse_reply_triples(text: str) -> list[Triple]:
    """Parse ``[<tag>] <subject> <relation> <object>`` lines; anything else is an invalid reply."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) == 4:
            parts = parts[1:]
        if len(parts) != 3:
            raise ValueError(f"reply line {lineno} is not a fact: {line.strip()!r}")
        out.append(Triple.of(*parts))
    return out


@dataclass
class RemoteProposer:
    """Language-model backed proposer; replies use the graph line format.

    Every reply is validated before it leaves the stage; an invalid reply is
    retried up to ``retries`` times and then raises the stage error.
    """

    endpoint: str
    templates: Mapping[str, str] | None = None
    retries: int = 3
    timeout: float = 60.0
    token_env: str = "KGPLAN_MODEL_TOKEN"
    examples: str = ""
    transport: Transport | None = None
    domain: Domain | None = None
    calls: list = field(default_factory=list)

    def _template(self, stage: str) -> str:
        if self.templates and stage in self.templates:
            return self.templates[stage]
        return resources.files("kgplan.data").joinpath("templates", f"{stage}.txt").read_text()

    def _ask(self, stage: str, *, task: TaskDescription, objects: Iterable[str], graph: Iterable[Triple]) -> str:
        prompt = self._template(stage).format(
            task=task.text, objects=", ".join(objects),
            graph="\n".join(f"{s} {r} {o}" for s, r, o in sorted(graph)), examples=self.examples)
        payload = {"stage": stage, "prompt": prompt}
        self.calls.append(payload)
        if self.transport is not None:
            return self.transport(self.endpoint, payload, self.timeout)
        return http_transport(self.endpoint, payload, self.timeout, os.environ.get(self.token_env))

    def _retry(self, stage: str, produce, error_cls=SynthesisError):
        last: Exception | None = None
        for attempt in range(max(1, self.retries)):
            try:
                return produce()
            except (SynthesisError, ValueError) as exc:
                last = exc
                log.warning("%s proposer reply rejected (attempt %d): %s", stage, attempt + 1, exc)
        raise error_cls(f"{stage} proposer gave no valid reply after {self.retries} attempts: {last}")

    def goal(self, task, inventory):
        lits = literals(self.domain)

        def produce():
            reply = self._ask("goal", task=task, objects=list(inventory), graph=())
            return _validate_goal(parse_reply_triples(reply), inventory, lits)
        return self._retry("goal", produce, UngroundableGoal)

    def _subset(self, stage, task, objects, graph):
        graph = frozenset(graph)

        def produce():
            triples = parse_reply_triples(self._ask(stage, task=task, objects=objects, graph=graph))
            stray = [t for t in triples if t not in graph]
            if stray:
                raise SchemaMismatch(f"{stage} reply contains facts absent from the graph: {stray[0]}")
            return frozenset(triple_to_atom(t) for t in triples)
        return self._retry(stage, produce, SchemaMismatch)

    def relations(self, goal, task, g_rel):
        return self._subset("relation", task, sorted(goal.entities(literals(self.domain))), g_rel)

    def properties(self, goal, task, relations, g_prop, robots):
        objs = sorted(goal.entities(literals(self.domain)) | atom_entities(relations, self.domain) | set(robots))
        return self._subset("property", task, objs, g_prop)

    def reach(self, relations, properties, g_reach, robots):
        objs = sorted(atom_entities(frozenset(relations) | frozenset(properties), self.domain) | set(robots))
        atoms = self._subset("reach", TaskDescription("locate the listed entities"), objs, g_reach)
        held = _held(relations)
        placed = {a.args[0] for a in atoms if a.predicate == "at_location"}
        locations = {x for t in g_reach if t.relation == "connected" for x in (t.subject, t.object)}
        for e in sorted(set(objs) - held - locations):
            if e not in placed:
                raise MissingLocation(e)
        return atoms


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class Synthesis:
    problem: Problem
    goal: GoalSpec
    bundle: PredicateBundle


def generate_problem(graph: KnowledgeGraph, task: TaskDescription, inventory: Inventory, *,
                     domain: Domain | None = None, proposer: Proposer | None = None,
                     withheld: Iterable[SubgraphKind] = (), name: str = "task") -> Synthesis:
    """Run goal -> relation -> property -> reach -> problem over ``graph``.

    Subgraphs in ``withheld`` are fed to their stage as empty sets; the
    property and reach stages then fall back to their priors.
    """
    domain = domain or household_domain()
    proposer = proposer or RuleBasedProposer(domain=domain)
    withheld = frozenset(SubgraphKind(k) for k in withheld)
    robots = inventory.robots

    def sub(kind):
        return frozenset() if kind in withheld else graph.subgraph(kind)

    goal = proposer.goal(task, inventory)
    rel = proposer.relations(goal, task, sub(SubgraphKind.RELATION))
    prior: set[Atom] = set()
    if SubgraphKind.PROPERTY in withheld:
        prop = property_prior(goal, robots)
        prior |= prop
    else:
        prop = proposer.properties(goal, task, rel, sub(SubgraphKind.PROPERTY), robots)
    if SubgraphKind.REACH in withheld:
        reach = reach_prior(rel, prop, robots=robots, domain=domain)
        prior |= reach
    else:
        reach = proposer.reach(rel, prop, sub(SubgraphKind.REACH), robots)
        # a goal entity nobody has placed is a perception gap, not a planning one
        placed = {a.args[0] for a in reach if a.predicate == "at_location"} | _held(rel)
        for e in sorted(goal.entities(literals(domain))):
            if inventory.types.get(e) not in ("location", "robot") and e not in placed:
                raise MissingLocation(e)
    bundle = PredicateBundle(rel, prop, reach, frozenset(prior))
    problem = synthesize_problem(goal, rel, prop, reach, domain, types=dict(inventory.types), name=name)
    return Synthesis(problem, goal, bundle)


def init_triples(problem: Problem) -> set[tuple]:
    """Triple form of every init atom (for reverse lookup against the graph)."""
    return {atom_to_triple(a) for a in problem.init}


__all__ = [
    "GoalLexicon", "GoalSpec", "InconsistentBundle", "Inventory", "MissingLocation", "PredicateBundle",
    "Proposer", "RemoteProposer", "RuleBasedProposer", "SchemaMismatch", "Synthesis", "SynthesisError",
    "TaskDescription", "TypeAssignmentMissing", "UNKNOWN_LOCATION", "UngroundableGoal", "default_lexicon",
    "extract_goal", "extract_properties", "extract_reachability", "extract_relations", "generate_problem",
    "init_triples", "parse_reply_triples", "property_prior", "reach_prior", "synthesize_problem",
]
