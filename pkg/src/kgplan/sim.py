"""Deterministic multi-robot household simulator.

The world is the ground truth a plan runs against. It checks what a symbolic
model may get wrong (a drawer that is really closed, an object nobody has seen
yet, a robot without the right gripper) and reports the first failure.
"""
from __future__ import annotations

import copy
import enum
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .graph import GraphDelta, KnowledgeGraph, SubgraphKind, Triple, apply_delta, normalize_token
from .pddl import GroundAction
from .planner import PartialOrderPlan, Plan
from .synthesis import UNKNOWN_LOCATION
from .vocab import HAS_PROPERTY, REQUIRED_CAPABILITY, atom_to_triple, kind_of_relation

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "Entity", "ErrorClass", "ExecError", "ExecutionTrace", "FailureRule", "ObservationOracle", "Robot",
    "Scenario", "ScenarioInvalid", "TraceRecord", "World", "execute", "load_scenario", "observe",
    "parse_scenario", "progress_graph", "step", "world_to_graph",
]

ACTIONS = frozenset({"goto", "pickup", "put_in", "put_on", "open", "close", "toggle_on", "toggle_off", "slice"})


class ScenarioInvalid(ValueError):
    pass


class ErrorClass(str, enum.Enum):
    PLANNER_FAILURE = "PlannerFailure"
    PRECONDITION_VIOLATION = "PreconditionViolation"
    OBJECT_NOT_FOUND = "ObjectNotFound"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ExecError:
    cls: ErrorClass
    detail: str
    step: int | None = None
    action: str | None = None
    entities: tuple[str, ...] = ()

    @property
    def message(self) -> str:
        if self.action is None:
            return f"{self.cls}: {self.detail}"
        return f"{self.cls} at step {self.step} {self.action}: {self.detail}"

    def __str__(self) -> str:
        return self.message

    def __bool__(self) -> bool:
        return True


def PreconditionViolation(detail: str, *entities: str) -> ExecError:
    return ExecError(ErrorClass.PRECONDITION_VIOLATION, detail, entities=entities)


def ObjectNotFound(name: str) -> ExecError:
    return ExecError(ErrorClass.OBJECT_NOT_FOUND, name, entities=(name,))


@dataclass
class Entity:
    kind: str
    location: str | None
    states: set[str] = field(default_factory=set)
    affordances: set[str] = field(default_factory=set)
    parent: str | None = None  # what the entity is in/on
    relation: str | None = None  # "in" or "on"
    hidden: bool = False
    pieces: int = 0


@dataclass
class Robot:
    location: str
    capabilities: set[str] = field(default_factory=set)
    holding: list[str] = field(default_factory=list)
    capacity: int = 1


@dataclass
class World:
    locations: set[str] = field(default_factory=set)
    edges: set[tuple[str, str]] = field(default_factory=set)
    entities: dict[str, Entity] = field(default_factory=dict)
    robots: dict[str, Robot] = field(default_factory=dict)
    revision: int = 0
    observed: set[tuple[str, str]] = field(default_factory=set)

    def copy(self) -> "World":
        return copy.deepcopy(self)

    def held_by(self, name: str) -> str | None:
        for r, robot in self.robots.items():
            if name in robot.holding:
                return r
        return None

    def visible(self, name: str) -> bool:
        e = self.entities.get(name)
        return e is not None and not e.hidden

    def validate(self) -> None:
        for a, b in self.edges:
            if a not in self.locations or b not in self.locations:
                raise ScenarioInvalid(f"edge {a} -> {b} uses an undeclared location")
        for r, robot in self.robots.items():
            if robot.location not in self.locations:
                raise ScenarioInvalid(f"robot {r} is at undeclared location {robot.location}")
            if len(robot.holding) > robot.capacity:
                raise ScenarioInvalid(f"robot {r} holds more than {robot.capacity} entities")
        for name, e in self.entities.items():
            held = self.held_by(name)
            if held and e.location is not None:
                raise ScenarioInvalid(f"{name} is held by {held} but also has a location")
            if not held and e.location not in self.locations:
                raise ScenarioInvalid(f"{name} is at undeclared location {e.location}")
            if e.parent is not None and e.parent not in self.entities:
                raise ScenarioInvalid(f"{name} is {e.relation} unknown entity {e.parent}")
            seen, cur = {name}, e.parent
            while cur is not None:
                if cur in seen:
                    raise ScenarioInvalid(f"containment cycle through {name}")
                seen.add(cur)
                cur = self.entities[cur].parent


# ---------------------------------------------------------------- graph view

def entity_triples(world: World, name: str) -> set[tuple[SubgraphKind, Triple]]:
    e = world.entities[name]
    out = set()
    if e.parent is not None and world.visible(e.parent):
        out.add((SubgraphKind.RELATION, Triple(name, e.relation, e.parent)))
    for s in e.states:
        out.add((SubgraphKind.PROPERTY, Triple(name, "has_state", s)))
    for a in e.affordances:
        out.add((SubgraphKind.PROPERTY, Triple(name, HAS_PROPERTY, a)))
    if e.location is not None:
        out.add((SubgraphKind.REACH, Triple(name, "at_location", e.location)))
    holder = world.held_by(name)
    if holder:
        out.add((SubgraphKind.RELATION, Triple(holder, "holding", name)))
    return out


def world_to_graph(world: World) -> KnowledgeGraph:
    items: set[tuple[SubgraphKind, Triple]] = set()
    for loc in world.locations:
        items.add((SubgraphKind.REACH, Triple(loc, "is_a", "location")))
    for a, b in world.edges:
        items.add((SubgraphKind.REACH, Triple(a, "connected", b)))
    for r, robot in world.robots.items():
        items.add((SubgraphKind.REACH, Triple(r, "at_location", robot.location)))
        for c in robot.capabilities:
            items.add((SubgraphKind.PROPERTY, Triple(r, "has_capability", c)))
        if len(robot.holding) < robot.capacity:
            items.add((SubgraphKind.PROPERTY, Triple(r, "has_state", "hand_empty")))
    for name, e in world.entities.items():
        if not e.hidden:
            items |= entity_triples(world, name)
    return KnowledgeGraph(sorted(items, key=lambda kt: (kt[0].value, kt[1])))


# ---------------------------------------------------------------- stepping

def _locate(world: World, robot: str, name: str) -> tuple[Entity | None, ExecError | None]:
    e = world.entities.get(name)
    if e is None or e.hidden:
        return None, ObjectNotFound(name)
    here = world.robots[robot].location
    if e.location != here:
        return None, PreconditionViolation(f"{name} is not at {here}", name)
    return e, None


def _capability(world: World, robot: str, action: str) -> ExecError | None:
    cap = REQUIRED_CAPABILITY.get(action)
    if cap and cap not in world.robots[robot].capabilities:
        return PreconditionViolation(f"{robot} lacks capability {cap}", robot)
    return None


def step(world: World, action: GroundAction, robot: str | None = None) -> World | ExecError:
    """Apply one action; returns the successor world or the error that stopped it."""
    name, args = action.name, action.args
    if name not in ACTIONS:
        return PreconditionViolation(f"unknown action {name}")
    if not args or args[0] not in world.robots:
        return PreconditionViolation(f"{action} is not bound to a declared robot")
    r = args[0]
    if robot is not None and robot != r:
        return PreconditionViolation(f"{action} is bound to {r}, not {robot}", r)
    err = _capability(world, r, name)
    if err:
        return err
    w = world.copy()
    bot = w.robots[r]

    if name == "goto":
        src, dst = args[1], args[2]
        if bot.location != src:
            return PreconditionViolation(f"{r} is not at {src}", r)
        if (src, dst) not in w.edges:
            return PreconditionViolation(f"no passage from {src} to {dst}", src, dst)
        bot.location = dst
    elif name == "pickup":
        x = args[1]
        e, err = _locate(w, r, x)
        if err:
            return err
        if w.held_by(x):
            return PreconditionViolation(f"{x} is already held", x)
        if len(bot.holding) >= bot.capacity:
            return PreconditionViolation(f"{r} has no free hand", r)
        if e.kind != "item":
            return PreconditionViolation(f"{x} cannot be picked up", x)
        if e.parent is not None and e.relation == "in" and "closed" in w.entities[e.parent].states:
            return PreconditionViolation(f"{e.parent} is closed", e.parent)
        e.location, e.parent, e.relation = None, None, None
        bot.holding.append(x)
    elif name in ("put_in", "put_on"):
        x, target = args[1], args[2]
        if x not in bot.holding:
            return PreconditionViolation(f"{r} is not holding {x}", r, x)
        t, err = _locate(w, r, target)
        if err:
            return err
        if name == "put_in":
            if "container" not in t.affordances:
                return PreconditionViolation(f"{target} is not a container", target)
            if "closed" in t.states:
                return PreconditionViolation(f"{target} is closed", target)
        elif "surface" not in t.affordances:
            return PreconditionViolation(f"{target} is not a surface", target)
        e = w.entities[x]
        e.location, e.parent, e.relation = bot.location, target, "in" if name == "put_in" else "on"
        bot.holding.remove(x)
    else:
        x = args[1]
        e, err = _locate(w, r, x)
        if err:
            return err
        if name in ("open", "close"):
            if "openable" not in e.affordances:
                return PreconditionViolation(f"{x} cannot be opened or closed", x)
            want, other = ("closed", "open") if name == "open" else ("open", "closed")
            if want not in e.states:
                return PreconditionViolation(f"{x} is already {other}", x)
            e.states.discard(want)
            e.states.add(other)
        elif name in ("toggle_on", "toggle_off"):
            if "toggleable" not in e.affordances:
                return PreconditionViolation(f"{x} cannot be switched", x)
            want, other = ("off", "on") if name == "toggle_on" else ("on", "off")
            if want not in e.states:
                return PreconditionViolation(f"{x} is already {other}", x)
            e.states.discard(want)
            e.states.add(other)
        else:  # slice
            if "sliceable" not in e.affordances:
                return PreconditionViolation(f"{x} cannot be sliced", x)
            e.states.add("sliced")
            for i in range(e.pieces):
                w.entities[f"{x}_piece_{i + 1}"] = Entity("item", e.location, {"sliced"}, set(), e.parent, e.relation)
            e.pieces = 0
    w.revision += 1
    return w


# ---------------------------------------------------------------- execution

@dataclass(frozen=True)
class TraceRecord:
    step: int
    action: str
    robot: str
    outcome: str  # "ok" or "failed"
    revision: int
    start: int
    end: int


@dataclass
class ExecutionTrace:
    records: list[TraceRecord] = field(default_factory=list)
    wall_secs: float = 0.0
    ticks: int = 0

    @property
    def ok_count(self) -> int:
        return sum(r.outcome == "ok" for r in self.records)

    def executed(self) -> list[str]:
        return [r.action for r in self.records if r.outcome == "ok"]


def _schedule(actions, order, tick: int) -> list[tuple[int, int, int]]:
    """Greedy per-robot tracks: (start, end, index) in execution order."""
    finish: dict[int, int] = {}
    free: dict[str, int] = {}
    preds: dict[int, list[int]] = {j: [] for j in range(len(actions))}
    for i, j in order:
        preds[j].append(i)
    out = []
    for j, a in enumerate(actions):
        start = max([finish[i] for i in preds[j]] + [free.get(a.args[0], 0)])
        finish[j] = start + tick
        free[a.args[0]] = finish[j]
        out.append((start, finish[j], j))
    return sorted(out)


def execute(world: World, plan: Plan | PartialOrderPlan | Iterable[GroundAction], *, tick: int = 1,
            first_step: int = 0) -> tuple[World, ExecutionTrace, ExecError | None]:
    """Run ``plan`` from ``world`` and stop at the first failure.

    Partial-order plans run on one track per robot: an action starts once the
    robot is free and every ordered predecessor has finished.
    """
    t0 = time.perf_counter()
    if isinstance(plan, PartialOrderPlan):
        actions = plan.actions
        slots = _schedule(actions, plan.order, tick)
    else:
        actions = tuple(plan.actions if isinstance(plan, Plan) else plan)
        slots = [(i * tick, (i + 1) * tick, i) for i in range(len(actions))]
    trace = ExecutionTrace()
    cur = world
    error = None
    for start, end, j in slots:
        a = actions[j]
        nxt = step(cur, a)
        robot = a.args[0] if a.args else ""
        if isinstance(nxt, ExecError):
            error = ExecError(nxt.cls, nxt.detail, first_step + j, str(a), nxt.entities)
            trace.records.append(TraceRecord(first_step + j, str(a), robot, "failed", cur.revision, start, end))
            trace.ticks = max(trace.ticks, end)
            break
        cur = nxt
        trace.records.append(TraceRecord(first_step + j, str(a), robot, "ok", cur.revision, start, end))
        trace.ticks = max(trace.ticks, end)
    trace.wall_secs = time.perf_counter() - t0
    return cur, trace, error


# ---------------------------------------------------------------- observation

@dataclass(frozen=True)
class FailureRule:
    cls: ErrorClass
    pattern: re.Pattern
    triples: tuple[tuple[SubgraphKind, Triple], ...]

    def matches(self, err: ExecError) -> bool:
        return err.cls == self.cls and bool(self.pattern.search(err.detail))


@dataclass(frozen=True)
class ObservationOracle:
    """Scripted stand-in for visual discovery.

    ``reveal`` maps a location to the hidden entities a robot standing there
    will notice. ``on_failure`` rules disclose fixed triples when an error
    matching the rule is raised (the robot looks at what just went wrong).
    """

    reveal: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    on_failure: tuple[FailureRule, ...] = ()

    def failure_delta(self, world: World, err: ExecError) -> GraphDelta:
        adds = set()
        for rule in self.on_failure:
            if rule.matches(err):
                adds.update((k, t) for k, t in rule.triples if t.subject in world.entities)
        return GraphDelta(frozenset(adds))


def observe(world: World, robot: str, oracle: ObservationOracle) -> GraphDelta:
    """Reveal what the oracle lets ``robot`` see at its location (idempotent per location)."""
    if robot not in world.robots:
        raise KeyError(f"unknown robot {robot}")
    loc = world.robots[robot].location
    if (robot, loc) in world.observed or loc not in oracle.reveal:
        world.observed.add((robot, loc))
        return GraphDelta()
    world.observed.add((robot, loc))
    adds: set = set()
    revealed = []
    for name in oracle.reveal[loc]:
        e = world.entities.get(name)
        if e is not None and e.hidden and e.location == loc:
            e.hidden = False
            revealed.append(name)
    for name in revealed:
        adds |= entity_triples(world, name)
        # anything resting on or in the revealed entity becomes describable too
        for other, oe in world.entities.items():
            if oe.parent == name and not oe.hidden:
                adds.add((SubgraphKind.RELATION, Triple(other, oe.relation, name)))
    return GraphDelta(frozenset(adds))


# ---------------------------------------------------------------- knowledge progression

def progress_graph(graph: KnowledgeGraph, actions: Iterable[GroundAction]) -> KnowledgeGraph:
    """Advance the robots' belief graph by the symbolic effects of executed actions."""
    for a in actions:
        rem = {atom_to_triple(d) for d in a.delete if UNKNOWN_LOCATION not in d.args}
        add = {atom_to_triple(d) for d in a.add if UNKNOWN_LOCATION not in d.args}
        graph = apply_delta(graph, GraphDelta(frozenset(add), frozenset(rem - add)))
    return graph


# ---------------------------------------------------------------- scenarios

@dataclass(frozen=True)
class Scenario:
    name: str
    task: str
    goal: tuple[Triple, ...] | None
    world: World
    types: Mapping[str, str]
    oracle: ObservationOracle
    omit: frozenset[Triple] = frozenset()
    belief: tuple[Triple, ...] = ()
    category: str = "simple"
    tags: tuple[str, ...] = ()
    source: str = ""

    def fresh_world(self) -> World:
        return self.world.copy()

    def initial_graph(self) -> KnowledgeGraph:
        """What the team believes before acting: the visible world, minus gaps, plus stale beliefs."""
        g = world_to_graph(self.world)
        items = [(k, t) for k, t in g.items() if t not in self.omit]
        g = KnowledgeGraph(items)
        beliefs = frozenset((kind_of_relation(t.relation), t) for t in self.belief)
        return apply_delta(g, GraphDelta(beliefs)) if beliefs else g

    def has_hidden(self) -> bool:
        return any(e.hidden for e in self.world.entities.values())

    def complete(self) -> bool:
        return not (self.omit or self.belief or self.has_hidden())


def _triples(rows, where: str) -> tuple[Triple, ...]:
    out = []
    for row in rows or ():
        if len(row) != 3:
            raise ScenarioInvalid(f"{where}: expected [subject, relation, object], got {row!r}")
        out.append(Triple.of(*row))
    return tuple(out)


def parse_scenario(text: str, *, name: str | None = None, source: str = "") -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioInvalid(f"{source or 'scenario'}: {exc}") from None
    try:
        return _build(data, name, source)
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"{source or 'scenario'}: {exc}") from None


def _build(data: dict, name: str | None, source: str) -> Scenario:
    wd = data.get("world", {})
    locations = {normalize_token(x) for x in wd.get("locations", [])}
    edges = set()
    for a, b in wd.get("edges", []):
        a, b = normalize_token(a), normalize_token(b)
        edges |= {(a, b), (b, a)}
    types: dict[str, str] = {x: "location" for x in locations}
    entities = {}
    for ename, ed in data.get("entities", {}).items():
        ename = normalize_token(ename)
        parent = relation = None
        for rel in ("in", "on"):
            if rel in ed:
                parent, relation = normalize_token(ed[rel]), rel
        entities[ename] = Entity(
            kind=ed.get("type", "item"), location=normalize_token(ed["location"]) if "location" in ed else None,
            states={normalize_token(s) for s in ed.get("states", [])},
            affordances={normalize_token(s) for s in ed.get("affordances", [])},
            parent=parent, relation=relation, hidden=bool(ed.get("hidden", False)), pieces=int(ed.get("pieces", 0)))
        types[ename] = ed.get("type", "item")
    robots = {}
    for rname, rd in data.get("robots", {}).items():
        rname = normalize_token(rname)
        holding = [normalize_token(x) for x in ([rd["holding"]] if isinstance(rd.get("holding"), str)
                                                else rd.get("holding", []))]
        robots[rname] = Robot(normalize_token(rd["location"]), {normalize_token(c) for c in rd.get("capabilities", [])},
                              holding, int(rd.get("capacity", 1)))
        types[rname] = "robot"
    types.update({normalize_token(k): v for k, v in data.get("types", {}).items()})
    world = World(locations, edges, entities, robots)
    world.validate()

    od = data.get("oracle", {})
    reveal: dict[str, list[str]] = {}
    for rule in od.get("reveal", []):
        reveal.setdefault(normalize_token(rule["location"]), []).extend(normalize_token(e) for e in rule["entities"])
    failures = []
    for rule in od.get("on_failure", []):
        triples = _triples(rule.get("triples", []), "oracle.on_failure")
        failures.append(FailureRule(ErrorClass(rule.get("class", "PreconditionViolation")), re.compile(rule["match"]),
                                    tuple((kind_of_relation(t.relation), t) for t in triples)))
    for t in (x for r in failures for _, x in r.triples):
        if t.subject not in entities and t.subject not in robots:
            raise ScenarioInvalid(f"failure rule describes unknown entity {t.subject}")
    oracle = ObservationOracle({k: tuple(v) for k, v in reveal.items()}, tuple(failures))

    kg = data.get("kg", {})
    goal = _triples(data["goal"], "goal") if "goal" in data else None
    return Scenario(
        name=normalize_token(data.get("name") or name or "scenario"), task=data["task"], goal=goal or None,
        world=world, types=types, oracle=oracle, omit=frozenset(_triples(kg.get("omit"), "kg.omit")),
        belief=_triples(kg.get("belief"), "kg.belief"), category=data.get("category", "simple"),
        tags=tuple(data.get("tags", [])), source=source)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioInvalid(f"{path}: {exc}") from None
    return parse_scenario(text, name=path.stem, source=str(path))
