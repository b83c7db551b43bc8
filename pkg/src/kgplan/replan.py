"""Failure-driven knowledge repair.

Given an error, propose a handful of single-fact graph additions, re-run
synthesis and planning under each, and keep the one that best trades
plausibility against extra plan length. Repeat until a plan survives the
probe or the budget runs out.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .graph import GraphDelta, KnowledgeGraph, SubgraphKind, Triple, apply_delta, declared_locations, serialize
from .pddl import Domain, Problem, ground
from .planner import Plan, PlanNotFound, PlannerConfig, solve, validate
from .sim import ErrorClass, ExecError, World, execute
from .synthesis import (
    GoalSpec,
    Inventory,
    MissingLocation,
    Proposer,
    RuleBasedProposer,
    SynthesisError,
    TaskDescription,
    generate_problem,
    http_transport,
)
from .vocab import (
    CAPABILITIES,
    ENABLING_AFFORDANCE,
    GOAL_AFFORDANCE,
    GOAL_STATE_AFFORDANCE,
    HAS_PROPERTY,
    REQUIRED_CAPABILITY,
    household_domain,
    kind_of_relation,
)

log = logging.getLogger(__name__)

__all__ = [
    "CandidateEvaluation", "Diagnosis", "DiagnosticClass", "Hypothesis", "NoCandidates", "RemoteCandidateGenerator",
    "ReplanConfig", "ReplanContext", "ReplanExhausted", "ReplanResult", "SelectionFailed", "delta_cost",
    "diagnose", "effective_score", "generate_candidates", "normalize_weights", "replan_loop", "score_and_select",
]

INF = math.inf
FOCUS_SCORE, GOAL_SCORE, CAPABILITY_SCORE = 3, 2, 1


class DiagnosticClass(str, enum.Enum):
    PLANNER = "Planner"
    EXECUTION = "Execution"
    PERCEPTION = "Perception"

    def __str__(self) -> str:
        return self.value


class ReplanError(Exception):
    pass


class NoCandidates(ReplanError):
    pass


class SelectionFailed(ReplanError):
    pass


class ReplanExhausted(ReplanError):
    def __init__(self, reason: str, log_records: list[dict]):
        super().__init__(f"replanning gave up: {reason} after {len(log_records)} iteration(s)")
        self.reason = reason
        self.log = log_records


@dataclass(frozen=True)
class Diagnosis:
    cls: DiagnosticClass
    focus: tuple[str, ...]
    states: tuple[tuple[str, str], ...] = ()  # (entity, state) facts asserted by the message
    misplaced: bool = False  # the message says an entity is not where it was believed to be


@dataclass(frozen=True)
class Hypothesis:
    delta: GraphDelta
    weight: float
    rationale: str = ""

    def __post_init__(self):
        if not self.delta:
            raise ValueError("hypothesis delta must be non-empty")
        if not self.weight > 0:
            raise ValueError("hypothesis weight must be positive")

    @property
    def key(self) -> str:
        adds = "; ".join(f"+{k.value} {t}" for k, t in self.delta.sorted_additions())
        rems = "; ".join(f"-{k.value} {t}" for k, t in sorted(self.delta.removals, key=lambda kt: (kt[0].value, kt[1])))
        return "; ".join(x for x in (adds, rems) if x)

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class ReplanConfig:
    k: int = 5
    lam: float = 2.0
    max_iterations: int = 10
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    dry_run: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class CandidateEvaluation:
    hypothesis: Hypothesis
    p: float
    delta_cost: float  # int, or inf when the candidate yields no valid plan
    plan: Plan | PlanNotFound | None = None
    problem: Problem | None = None

    def score(self, lam: float) -> float:
        return effective_score(self.p, self.delta_cost, lam)


# ---------------------------------------------------------------- diagnosis

_STATE_DETAIL = re.compile(r"^(\w+) is (?:already )?(open|closed|on|off)$")


def diagnose(e, goal: GoalSpec | None = None) -> Diagnosis:
    """Classify an error and pull out the entities it talks about."""
    goal_entities = tuple(sorted(goal.entities())) if goal is not None else ()
    if isinstance(e, PlanNotFound):
        return Diagnosis(DiagnosticClass.PLANNER, goal_entities)
    if isinstance(e, MissingLocation):
        return Diagnosis(DiagnosticClass.PERCEPTION, (e.entity,))
    if isinstance(e, ExecError):
        if e.cls == ErrorClass.OBJECT_NOT_FOUND:
            return Diagnosis(DiagnosticClass.PERCEPTION, tuple(e.entities) or (e.detail,))
        if e.cls == ErrorClass.PLANNER_FAILURE:
            return Diagnosis(DiagnosticClass.PLANNER, goal_entities)
        states = ()
        m = _STATE_DETAIL.match(e.detail)
        if m:
            # "drawer is closed" states what is true; "x is already open" states the opposite was assumed
            state = m.group(2)
            states = ((m.group(1), state),)
        return Diagnosis(DiagnosticClass.EXECUTION, tuple(dict.fromkeys(e.entities)), states,
                         " is not at " in e.detail)
    if isinstance(e, SynthesisError):
        return Diagnosis(DiagnosticClass.PLANNER, goal_entities)
    raise TypeError(f"cannot diagnose {type(e).__name__}")


# ---------------------------------------------------------------- candidates

def _add(kind, s, r, o) -> GraphDelta:
    return GraphDelta(frozenset({(SubgraphKind(kind), Triple(s, r, o))}))


def _score(triple: Triple, focus: set[str], goal_subjects: set[str]) -> int:
    score = 0
    if triple.subject in focus:
        score += FOCUS_SCORE
    if triple.subject in goal_subjects:
        score += GOAL_SCORE
    if triple.relation == "has_capability":
        score += CAPABILITY_SCORE
    return score


def _states_of(graph: KnowledgeGraph, x: str) -> list[str]:
    return sorted(t.object for t in graph.subgraph(SubgraphKind.PROPERTY)
                  if t.subject == x and t.relation == "has_state")


def _robots(graph: KnowledgeGraph, inventory: Inventory | None) -> list[str]:
    if inventory is not None:
        return inventory.robots
    return sorted({t.subject for t in graph.subgraph(SubgraphKind.PROPERTY) if t.relation == "has_capability"})


def _raw_candidates(diag: Diagnosis, graph: KnowledgeGraph, goal: GoalSpec | None,
                    inventory: Inventory | None) -> list[Triple]:
    out: list[Triple] = []
    robots = _robots(graph, inventory)
    if diag.cls == DiagnosticClass.EXECUTION:
        for x in diag.focus:
            for state in _states_of(graph, x) + [s for e, s in diag.states if e == x]:
                aff = ENABLING_AFFORDANCE.get(state)
                if aff:
                    out.append(Triple(x, HAS_PROPERTY, aff))
                    cap = REQUIRED_CAPABILITY["open" if aff == "openable" else "toggle_on"]
                    out.extend(Triple(r, "has_capability", cap) for r in robots)
            out.extend(Triple(e, "has_state", s) for e, s in diag.states if e == x)
            if diag.misplaced:
                out.extend(Triple(x, "at_location", l) for l in sorted(declared_locations(graph)))
    elif diag.cls == DiagnosticClass.PERCEPTION:
        for x in diag.focus:
            out.extend(Triple(x, "at_location", l) for l in sorted(declared_locations(graph)))
    else:
        if goal is not None:
            for t in goal.goal_triples:
                aff = GOAL_AFFORDANCE.get(t.relation)
                if aff:
                    out.append(Triple(t.object, HAS_PROPERTY, aff))
                if t.relation == "has_state" and t.object in GOAL_STATE_AFFORDANCE:
                    out.append(Triple(t.subject, HAS_PROPERTY, GOAL_STATE_AFFORDANCE[t.object]))
        for x in diag.focus:
            for state in _states_of(graph, x):
                aff = ENABLING_AFFORDANCE.get(state)
                if aff:
                    out.append(Triple(x, HAS_PROPERTY, aff))
        out.extend(Triple(r, "has_capability", c) for r in robots for c in CAPABILITIES)
    return out


def normalize_weights(weights: Sequence[float]) -> list[float]:
    total = math.fsum(weights)
    if not total > 0:
        raise ValueError("weights must have a positive sum")
    return [w / total for w in weights]


def generate_candidates(k: int, e, graph: KnowledgeGraph, *, goal: GoalSpec | None = None,
                        inventory: Inventory | None = None,
                        exclude: Iterable[str] = ()) -> tuple[list[Hypothesis], list[float]]:
    """Top-k single-fact additions for error ``e`` with weights proportional to relevance."""
    if k < 1:
        raise ValueError("k must be at least 1")
    diag = diagnose(e, goal)
    known = set(graph.entities) | (set(inventory) if inventory is not None else set())
    if diag.focus and not any(x in known for x in diag.focus):
        raise NoCandidates(f"{e} refers only to unknown entities {list(diag.focus)}")
    exclude = set(exclude)
    focus = set(diag.focus)
    goal_subjects = goal.subjects() if goal is not None else set()
    scored: dict[Triple, int] = {}
    for t in _raw_candidates(diag, graph, goal, inventory):
        if t.subject not in known:
            continue
        kind = kind_of_relation(t.relation)
        if graph.contains(kind, t):
            continue
        s = _score(t, focus, goal_subjects)
        if s > 0:
            scored[t] = max(s, scored.get(t, 0))
    hyps = []
    for t, s in sorted(scored.items(), key=lambda ts: (-ts[1], ts[0])):
        h = Hypothesis(_add(kind_of_relation(t.relation), *t), float(s), f"{diag.cls} fix scored {s}")
        if h.key in exclude:
            continue
        hyps.append(h)
        if len(hyps) == k:
            break
    if not hyps:
        raise NoCandidates(f"no candidate repairs for {e}")
    weights = normalize_weights([h.weight for h in hyps])
    hyps = [Hypothesis(h.delta, w, h.rationale) for h, w in zip(hyps, weights)]
    return hyps, weights


# ---------------------------------------------------------------- selection

def delta_cost(base_problem: Problem | None, new_plan: Plan, base_plan: Plan | PlanNotFound | None) -> int:
    """Extra plan length caused by a repair; the new cost itself if the base had no plan."""
    if isinstance(base_plan, Plan):
        return new_plan.cost - base_plan.cost
    return new_plan.cost


def effective_score(p: float, dc: float, lam: float) -> float:
    """p / (max(dc, 0) + 1) ** lam, or 0 for an infeasible candidate."""
    if dc == INF:
        return 0.0
    return p / (max(dc, 0) + 1) ** lam


def _exact_score(p: float, dc: float, lam: float):
    # floats are binary rationals, so with integral dc and lam the score is an exact
    # fraction; comparing those keeps near-ties from being decided by rounding
    if dc == INF:
        return Fraction(0)
    if float(lam).is_integer() and float(dc).is_integer():
        return Fraction(p) / (max(int(dc), 0) + 1) ** int(lam)
    return effective_score(p, dc, lam)


def score_and_select(evaluations: Sequence[CandidateEvaluation], lam: float = 2.0) -> CandidateEvaluation:
    """Highest score wins; ties go to the higher p, then the smaller hypothesis key."""
    if not evaluations:
        raise SelectionFailed("no candidates to select from")
    feasible = [ev for ev in evaluations if ev.delta_cost != INF]
    if not feasible:
        raise SelectionFailed("every candidate is infeasible")
    return min(feasible, key=lambda ev: (-_exact_score(ev.p, ev.delta_cost, lam), -ev.p, ev.hypothesis.key))


# ---------------------------------------------------------------- remote generator

@dataclass
class RemoteCandidateGenerator:
    """Ask a language model for repairs. Reply lines: ``<weight> <subject> <relation> <object>``."""

    endpoint: str
    template: str | None = None
    retries: int = 3
    timeout: float = 60.0
    token_env: str = "KGPLAN_MODEL_TOKEN"
    transport: Callable[[str, dict, float], str] | None = None

    def _template(self) -> str:
        if self.template is not None:
            return self.template
        return resources.files("kgplan.data").joinpath("templates", "replan.txt").read_text()

    def __call__(self, k: int, e, graph: KnowledgeGraph, *, goal=None, inventory=None, exclude=()):
        prompt = self._template().format(k=k, error=str(e), graph=serialize(graph),
                                         goal="\n".join(str(t) for t in (goal.goal_triples if goal else ())))
        exclude = set(exclude)
        for attempt in range(max(1, self.retries)):
            payload = {"stage": "replan", "prompt": prompt}
            if self.transport is not None:
                reply = self.transport(self.endpoint, payload, self.timeout)
            else:
                reply = http_transport(self.endpoint, payload, self.timeout, os.environ.get(self.token_env))
            hyps = []
            for line in reply.splitlines():
                parts = line.split("#", 1)[0].split()
                if len(parts) != 4:
                    continue
                try:
                    w = min(max(float(parts[0]), 1e-9), 1.0)
                    t = Triple.of(*parts[1:])
                except ValueError:
                    continue
                h = Hypothesis(_add(kind_of_relation(t.relation), *t), w, "remote proposal")
                if h.key not in exclude and not graph.contains(kind_of_relation(t.relation), t):
                    hyps.append(h)
            hyps = hyps[:k]
            if hyps:
                weights = normalize_weights([h.weight for h in hyps])
                return [Hypothesis(h.delta, w, h.rationale) for h, w in zip(hyps, weights)], weights
            log.warning("remote repair reply had no usable lines (attempt %d)", attempt + 1)
        raise NoCandidates("remote generator produced no usable candidates")


# ---------------------------------------------------------------- loop

@dataclass
class ReplanContext:
    """Everything needed to rebuild a problem from a graph."""

    task: TaskDescription
    inventory: Inventory
    withheld: frozenset = frozenset()
    proposer: Proposer | None = None
    world: World | None = None  # only used for the dry-run probe
    name: str = "task"
    generator: Callable | None = None

    def synthesize(self, graph: KnowledgeGraph, domain: Domain):
        return generate_problem(graph, self.task, self.inventory, domain=domain, proposer=self.proposer,
                                withheld=self.withheld, name=self.name)


@dataclass
class ReplanResult:
    graph: KnowledgeGraph
    problem: Problem | None
    plan: Plan | None
    iterations: int
    committed: list[Hypothesis]
    log: list[dict]
    expanded: int = 0


def _fmt_cost(dc: float):
    return "inf" if dc == INF else int(dc)


def _evaluate(h: Hypothesis, p: float, graph: KnowledgeGraph, ctx: ReplanContext, domain: Domain,
              base_problem: Problem | None, base_plan, cfg: ReplanConfig) -> tuple[CandidateEvaluation, int]:
    trial = apply_delta(graph, h.delta)
    try:
        synth = ctx.synthesize(trial, domain)
    except SynthesisError:
        return CandidateEvaluation(h, p, INF), 0
    problem = synth.problem
    if base_problem is not None and problem.init == base_problem.init and problem.goal == base_problem.goal:
        # the update never reaches the problem, so it cannot repair anything
        return CandidateEvaluation(h, p, INF, None, problem), 0
    task, result = solve(domain, problem, cfg.planner)
    if not isinstance(result, Plan) or not validate(result, task):
        return CandidateEvaluation(h, p, INF, result, problem), getattr(result, "expanded", 0)
    return CandidateEvaluation(h, p, delta_cost(base_problem, result, base_plan), result, problem), result.expanded


def _probe(plan: Plan, problem: Problem, domain: Domain, ctx: ReplanContext, cfg: ReplanConfig):
    if not validate(plan, ground(domain, problem)):
        return ExecError(ErrorClass.PLANNER_FAILURE, "plan does not validate")
    if cfg.dry_run and ctx.world is not None:
        _, _, err = execute(ctx.world.copy(), plan)
        return err
    return None


def replan_loop(domain: Domain | None, ctx: ReplanContext, graph: KnowledgeGraph, base_problem: Problem | None,
                e0, cfg: ReplanConfig | None = None, *, base_plan: Plan | PlanNotFound | None = None) -> ReplanResult:
    """Repair ``graph`` until a plan passes the probe.

    Raises ReplanExhausted (carrying the per-iteration log) when the
    iteration budget runs out or no candidate can be generated or selected.
    """
    domain = domain or household_domain()
    cfg = cfg or ReplanConfig()
    generator = ctx.generator or generate_candidates
    records: list[dict] = []
    committed: list[Hypothesis] = []
    seen: set[str] = set()
    e = e0
    problem, plan = base_problem, base_plan
    goal = None
    expanded = 0
    try:
        goal = ctx.synthesize(graph, domain).goal
    except SynthesisError:
        try:
            goal = (ctx.proposer or RuleBasedProposer(domain=domain)).goal(ctx.task, ctx.inventory)
        except SynthesisError:
            goal = None
    iteration = 0
    while e is not None:
        if iteration >= cfg.max_iterations:
            raise ReplanExhausted("max_iterations", records)
        iteration += 1
        record = {"iteration": iteration, "error": str(e), "class": str(diagnose(e, goal).cls),
                  "score": "p / (max(dc, 0) + 1) ** lambda", "lambda": cfg.lam}
        try:
            hyps, weights = generator(cfg.k, e, graph, goal=goal, inventory=ctx.inventory, exclude=seen)
        except NoCandidates as exc:
            record["outcome"] = "no_candidates"
            record["detail"] = str(exc)
            records.append(record)
            raise ReplanExhausted("no_candidates", records) from None
        ps = normalize_weights(weights)
        evals = []
        for h, p in zip(hyps, ps):
            ev, n = _evaluate(h, p, graph, ctx, domain, problem, plan, cfg)
            expanded += n
            evals.append(ev)
        record["candidates"] = [
            {"hypothesis": ev.hypothesis.key, "weight": ev.hypothesis.weight, "p": ev.p,
             "delta_cost": _fmt_cost(ev.delta_cost), "score": ev.score(cfg.lam)}
            for ev in evals
        ]
        record["p_sum"] = math.fsum(ps)
        try:
            best = score_and_select(evals, cfg.lam)
        except SelectionFailed as exc:
            record["outcome"] = "selection_failed"
            record["detail"] = str(exc)
            records.append(record)
            raise ReplanExhausted("selection_failed", records) from None
        seen.add(best.hypothesis.key)
        committed.append(best.hypothesis)
        graph = apply_delta(graph, best.hypothesis.delta)
        record["selected"] = best.hypothesis.key
        try:
            synth = ctx.synthesize(graph, domain)
            problem = synth.problem
            _, plan = solve(domain, problem, cfg.planner)
            expanded += plan.expanded
        except SynthesisError as exc:
            problem, plan = None, None
            e = exc
        else:
            if isinstance(plan, Plan):
                e = _probe(plan, problem, domain, ctx, cfg)
            else:
                e = plan
        record["outcome"] = "converged" if e is None else "retry"
        if e is not None:
            record["next_error"] = str(e)
        records.append(record)
    return ReplanResult(graph, problem, plan if isinstance(plan, Plan) else None, iteration, committed, records,
                        expanded)


def dump_log(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)

