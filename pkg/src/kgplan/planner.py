"""Forward state-space STRIPS planning over a grounded task.

States are packed into Python integers (one bit per atom) so applicability is
a mask test and successor generation is two bit operations.
"""
from __future__ import annotations

import heapq
import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .pddl import Atom, Domain, GroundAction, GroundedTask, Problem, ground

__all__ = [
    "Invalid",
    "InvalidPlanInput",
    "PartialOrderPlan",
    "Plan",
    "PlanNotFound",
    "PlannerConfig",
    "Valid",
    "cost",
    "deorder",
    "hadd",
    "linearizations",
    "plan",
    "solve",
    "validate",
]

MODES = ("optimal_bfs", "greedy_hadd", "astar_hadd")
INF = float("inf")


class InvalidPlanInput(ValueError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = "astar_hadd"
    node_budget: int = 1_000_000
    time_budget_secs: float = 300.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown planner mode {self.mode!r}; expected one of {MODES}")
        if self.node_budget <= 0 or self.time_budget_secs <= 0:
            raise ValueError("planner budgets must be positive")


@dataclass(frozen=True)
class Plan:
    actions: tuple[GroundAction, ...] = ()
    expanded: int = field(default=0, compare=False)

    @property
    def cost(self) -> int:
        return len(self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __bool__(self) -> bool:
        # a found plan is truthy even when empty, mirroring PlanNotFound
        return True

    def __iter__(self):
        return iter(self.actions)

    def to_text(self) -> str:
        lines = [f"{i}: {a}" for i, a in enumerate(self.actions)]
        lines.append(f"; cost = {self.cost}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PlanNotFound:
    """Search outcome when no plan was found; ``reason`` is exhausted or budget_exceeded."""

    reason: str
    expanded: int = 0
    message: str = "no plan found"

    def __bool__(self) -> bool:
        return False

    def __str__(self) -> str:
        return f"{self.message} ({self.reason})"


def cost(p: Plan) -> int:
    return len(p.actions)


class _Compiled:
    """Bit-packed view of a grounded task."""

    def __init__(self, task: GroundedTask):
        self.atoms = sorted(task.atoms)
        self.bit = {a: 1 << i for i, a in enumerate(self.atoms)}
        self.index = {a: i for i, a in enumerate(self.atoms)}
        self.actions = sorted(task.actions, key=str)
        self.names = [str(a) for a in self.actions]
        self.pre = [self.mask(a.pre) for a in self.actions]
        self.add = [self.mask(a.add) for a in self.actions]
        self.dele = [self.mask(a.delete) for a in self.actions]
        self.init = self.mask(task.init)
        self.goal = self.mask(task.goal)
        self.pre_idx = [[self.index[p] for p in a.pre] for a in self.actions]
        self.add_idx = [[self.index[p] for p in a.add] for a in self.actions]
        self.goal_idx = [self.index[g] for g in task.goal]
        self.consumers: list[list[int]] = [[] for _ in self.atoms]
        for j, idx in enumerate(self.pre_idx):
            for p in idx:
                self.consumers[p].append(j)
        self.no_pre = [j for j, idx in enumerate(self.pre_idx) if not idx]

    def mask(self, atoms: Iterable[Atom]) -> int:
        m = 0
        for a in atoms:
            m |= self.bit[a]
        return m

    def successors(self, state: int):
        for j, pre in enumerate(self.pre):
            if state & pre == pre:
                yield j, (state & ~self.dele[j]) | self.add[j]


def hadd(c: _Compiled, state: int) -> float:
    """Additive heuristic: sum over goal atoms of relaxed achievement cost."""
    n = len(c.atoms)
    costs = [INF] * n
    heap: list[tuple[float, int]] = []
    s = state
    i = 0
    while s:
        if s & 1:
            costs[i] = 0
            heap.append((0, i))
        s >>= 1
        i += 1
    remaining = [len(idx) for idx in c.pre_idx]
    acc = [0.0] * len(c.actions)

    def fire(j: int):
        val = acc[j] + 1
        for q in c.add_idx[j]:
            if val < costs[q]:
                costs[q] = val
                heapq.heappush(heap, (val, q))

    for j in c.no_pre:
        fire(j)
    while heap:
        val, p = heapq.heappop(heap)
        if val > costs[p]:
            continue
        for j in c.consumers[p]:
            remaining[j] -= 1
            acc[j] += val
            if remaining[j] == 0:
                fire(j)
    total = 0.0
    for g in c.goal_idx:
        if costs[g] == INF:
            return INF
        total += costs[g]
    return total


def _extract(parents: dict, state: int, c: _Compiled) -> tuple[GroundAction, ...]:
    steps = []
    while parents[state] is not None:
        prev, j = parents[state]
        steps.append(c.actions[j])
        state = prev
    return tuple(reversed(steps))


def plan(task: GroundedTask, cfg: PlannerConfig | None = None) -> Plan | PlanNotFound:
    """Search for a plan; returns PlanNotFound (a falsy value) rather than raising."""
    cfg = cfg or PlannerConfig()
    c = _Compiled(task)
    deadline = time.monotonic() + cfg.time_budget_secs
    if c.init & c.goal == c.goal:
        return Plan((), 0)
    if cfg.mode == "optimal_bfs":
        return _bfs(c, cfg, deadline)
    return _best_first(c, cfg, deadline, weight_g=1 if cfg.mode == "astar_hadd" else 0)


def _bfs(c: _Compiled, cfg: PlannerConfig, deadline: float):
    parents: dict[int, tuple | None] = {c.init: None}
    frontier = deque([c.init])
    expanded = 0
    while frontier:
        state = frontier.popleft()
        expanded += 1
        if expanded > cfg.node_budget or (expanded & 1023 == 0 and time.monotonic() > deadline):
            return PlanNotFound("budget_exceeded", expanded)
        for j, nxt in c.successors(state):
            if nxt in parents:
                continue
            parents[nxt] = (state, j)
            if nxt & c.goal == c.goal:
                return Plan(_extract(parents, nxt, c), expanded)
            frontier.append(nxt)
    return PlanNotFound("exhausted", expanded)


def _best_first(c: _Compiled, cfg: PlannerConfig, deadline: float, weight_g: int):
    h0 = hadd(c, c.init)
    if h0 == INF:
        # relaxed-unreachable goal: no state reachable from init can satisfy it
        return PlanNotFound("exhausted", 0)
    counter = itertools.count()
    best_g = {c.init: 0}
    parents: dict[int, tuple | None] = {c.init: None}
    heap = [(h0, 0, next(counter), c.init)]
    closed: set[int] = set()
    expanded = 0
    while heap:
        _, g, _, state = heapq.heappop(heap)
        if state in closed or g > best_g.get(state, INF):
            continue
        if state & c.goal == c.goal:
            return Plan(_extract(parents, state, c), expanded)
        closed.add(state)
        expanded += 1
        if expanded > cfg.node_budget or (expanded & 255 == 0 and time.monotonic() > deadline):
            return PlanNotFound("budget_exceeded", expanded)
        for j, nxt in c.successors(state):
            ng = g + 1
            if nxt in closed or ng >= best_g.get(nxt, INF):
                continue
            h = hadd(c, nxt)
            if h == INF:
                continue
            best_g[nxt] = ng
            parents[nxt] = (state, j)
            heapq.heappush(heap, (weight_g * ng + h, ng, next(counter), nxt))
    return PlanNotFound("exhausted", expanded)


def solve(domain: Domain, problem: Problem, cfg: PlannerConfig | None = None) -> tuple[GroundedTask, Plan | PlanNotFound]:
    task = ground(domain, problem)
    return task, plan(task, cfg)


@dataclass(frozen=True)
class Valid:
    final_state: frozenset = frozenset()

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Invalid:
    step: int | str  # index of the failing action, or "end" for unmet goals
    missing: frozenset[Atom]

    def __bool__(self) -> bool:
        return False


def validate(p: Plan | Sequence[GroundAction], task: GroundedTask) -> Valid | Invalid:
    """Replay ``p`` from the task's init and report the first problem found."""
    actions = p.actions if isinstance(p, Plan) else tuple(p)
    state = frozenset(task.init)
    for i, a in enumerate(actions):
        missing = a.pre - state
        if missing:
            return Invalid(i, frozenset(missing))
        state = (state - a.delete) | a.add
    unmet = task.goal - state
    if unmet:
        return Invalid("end", frozenset(unmet))
    return Valid(state)


@dataclass(frozen=True)
class PartialOrderPlan:
    actions: tuple[GroundAction, ...]
    order: frozenset[tuple[int, int]]

    def predecessors(self, j: int) -> list[int]:
        return sorted(i for i, k in self.order if k == j)

    def is_acyclic(self) -> bool:
        indeg = {i: 0 for i in range(len(self.actions))}
        for _, j in self.order:
            indeg[j] += 1
        ready = [i for i, d in indeg.items() if d == 0]
        seen = 0
        succ: dict[int, list[int]] = {}
        for i, j in self.order:
            succ.setdefault(i, []).append(j)
        while ready:
            i = ready.pop()
            seen += 1
            for j in succ.get(i, ()):
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
        return seen == len(self.actions)


def deorder(p: Plan, task: GroundedTask) -> PartialOrderPlan:
    """Keep only the orderings forced by causal links and interference.

    i < j stays ordered when j needs something i adds, or when either one
    deletes something the other needs or adds.
    """
    if not validate(p, task):
        raise InvalidPlanInput("deorder requires a valid plan")
    acts = p.actions
    order = set()
    for j in range(len(acts)):
        b = acts[j]
        for i in range(j):
            a = acts[i]
            if (a.add & b.pre or a.delete & b.pre or a.pre & b.delete
                    or a.add & b.delete or a.delete & b.add):
                order.add((i, j))
    return PartialOrderPlan(tuple(acts), frozenset(order))


def linearizations(po: PartialOrderPlan, rng, count: int) -> list[tuple[GroundAction, ...]]:
    """Sample ``count`` random topological orders of ``po``."""
    n = len(po.actions)
    preds = {j: {i for i, k in po.order if k == j} for j in range(n)}
    out = []
    for _ in range(count):
        done: list[int] = []
        placed: set[int] = set()
        while len(done) < n:
            ready = [j for j in range(n) if j not in placed and preds[j] <= placed]
            pick = ready[rng.randrange(len(ready))]
            placed.add(pick)
            done.append(pick)
        out.append(tuple(po.actions[j] for j in done))
    return out
