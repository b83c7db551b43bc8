"""Scenario suite runner and the five task metrics.

A run goes world -> belief graph -> problem -> plan -> execution. When
execution fails the team looks around (observation), and if the variant
allows it the replanner repairs the graph. Everything is deterministic: the
planning-time column uses a node-count clock unless a wall clock is asked for.
"""
from __future__ import annotations

import csv
import glob
import io
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .graph import GraphDelta, KnowledgeGraph, SubgraphKind, Triple, apply_delta
from .pddl import GroundAction, ground
from .planner import Plan, PlannerConfig, deorder, solve
from .replan import DiagnosticClass, ReplanConfig, ReplanContext, ReplanExhausted, diagnose, dump_log, replan_loop
from .sim import ExecError, Scenario, ScenarioInvalid, World, execute, load_scenario, observe, progress_graph, step
from .synthesis import Inventory, RuleBasedProposer, SynthesisError, TaskDescription, UngroundableGoal
from .vocab import household_domain

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = [
    "CSV_COLUMNS", "EmptySuite", "MetricsReport", "Record", "SuiteResult", "SuiteSpec", "VARIANTS",
    "bundled_suite", "compute_metrics", "load_suite", "run_scenario", "run_suite", "write_csv",
]

CSV_COLUMNS = ("scenario", "variant", "success", "goal_total", "goal_achieved", "actions_planned",
               "actions_ok", "pt_secs", "et_ticks", "replan_iters")

# withheld subgraphs, replanning allowed, discovery allowed
VARIANTS = {
    "full": (frozenset(), True, True),
    "no_replan": (frozenset(), False, False),
    "no_reach": (frozenset({SubgraphKind.REACH}), True, True),
    "no_reach_property": (frozenset({SubgraphKind.REACH, SubgraphKind.PROPERTY}), True, True),
    "no_graphs": (frozenset(SubgraphKind), True, True),
    "partial_obs": (frozenset(), True, False),
}

# logical seconds charged per search-node expansion
SECS_PER_NODE = 1e-4


class EmptySuite(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    scenario: str
    variant: str
    success: bool
    goal_total: int
    goal_achieved: int
    actions_planned: int
    actions_ok: int
    pt_secs: float
    et_ticks: int
    replan_iters: int
    note: str = ""

    def row(self) -> list[str]:
        return [self.scenario, self.variant, str(int(self.success)), str(self.goal_total), str(self.goal_achieved),
                str(self.actions_planned), str(self.actions_ok), f"{self.pt_secs:.6f}", str(self.et_ticks),
                str(self.replan_iters)]


@dataclass(frozen=True)
class MetricsReport:
    records: tuple[Record, ...]
    tcr: float
    gcr: float
    er: float
    mean_pt: float
    mean_et: float

    def summary(self) -> str:
        return (f"TCR {self.tcr:.1f}%  GCR {self.gcr:.1f}%  ER {self.er:.1f}%  "
                f"PT {self.mean_pt:.4f}s  ET {self.mean_et:.2f} ticks  (n={len(self.records)})")


def compute_metrics(records: Sequence[Record]) -> MetricsReport:
    """Pool goal conditions and actions across records (no per-task averaging)."""
    records = tuple(records)
    if not records:
        raise EmptySuite("no records to aggregate")
    n = len(records)
    tcr = 100.0 * sum(r.success for r in records) / n
    total = sum(r.goal_total for r in records)
    gcr = 100.0 * sum(r.goal_achieved for r in records) / total if total else 100.0
    planned = sum(r.actions_planned for r in records)
    if planned:
        er = 100.0 * sum(r.actions_ok for r in records) / planned
    else:
        log.info("no planned actions in any record; ER reported as 100")
        er = 100.0
    mean_pt = math.fsum(r.pt_secs for r in records) / n
    mean_et = sum(r.et_ticks for r in records) / n
    return MetricsReport(records, tcr, gcr, er, mean_pt, mean_et)


# ---------------------------------------------------------------- single scenario

def _goal_holds(world: World, t) -> bool:
    e = world.entities.get(t.subject)
    if t.relation in ("in", "on"):
        return e is not None and e.parent == t.object and e.relation == t.relation
    if t.relation == "has_state":
        return e is not None and t.object in e.states
    if t.relation == "holding":
        r = world.robots.get(t.subject)
        return r is not None and t.object in r.holding
    if t.relation == "at_location":
        if t.subject in world.robots:
            return world.robots[t.subject].location == t.object
        return e is not None and e.location == t.object
    return False


def ground_truth_goal(scenario: Scenario) -> tuple:
    if scenario.goal:
        return scenario.goal
    inv = Inventory(scenario.types)
    try:
        return RuleBasedProposer().goal(TaskDescription(scenario.task), inv).goal_triples
    except UngroundableGoal as exc:
        raise ScenarioInvalid(f"{scenario.name}: {exc}") from None


def _observe_all(world: World, graph: KnowledgeGraph, scenario: Scenario, err) -> KnowledgeGraph:
    if isinstance(err, ExecError):
        graph = apply_delta(graph, scenario.oracle.failure_delta(world, err))
    for r in sorted(world.robots):
        graph = apply_delta(graph, observe(world, r, scenario.oracle))
    return graph


def _explore(world: World, graph: KnowledgeGraph, scenario: Scenario, targets: Iterable[str]):
    """Walk one robot through known locations, breadth first, until the targets show up."""
    targets = set(targets)
    moves = 0

    def found() -> bool:
        placed = {t.subject for t in graph.subgraph(SubgraphKind.REACH) if t.relation == "at_location"}
        held = {t.object for t in graph.subgraph(SubgraphKind.RELATION) if t.relation == "holding"}
        return targets <= placed | held

    robots = sorted(world.robots)
    if not robots or found():
        return world, graph, moves
    r = robots[0]
    edges: dict[str, list[str]] = {}
    for t in sorted(graph.subgraph(SubgraphKind.REACH)):
        if t.relation == "connected":
            edges.setdefault(t.subject, []).append(t.object)
    start = world.robots[r].location
    order, parent = [start], {start: None}
    queue = deque([start])
    while queue:
        here = queue.popleft()
        for nxt in edges.get(here, ()):
            if nxt not in parent:
                parent[nxt] = here
                order.append(nxt)
                queue.append(nxt)

    def path(a: str, b: str) -> list[str]:
        # route between two visited locations over the BFS tree
        up_a, cur = [], a
        while cur is not None:
            up_a.append(cur)
            cur = parent[cur]
        up_b, cur = [], b
        while cur is not None:
            up_b.append(cur)
            cur = parent[cur]
        common = next(x for x in up_a if x in set(up_b))
        return up_a[:up_a.index(common)] + [common] + list(reversed(up_b[:up_b.index(common)]))

    for loc in order:
        here = world.robots[r].location
        if loc != here:
            route = path(here, loc)
            for a, b in zip(route, route[1:]):
                act = GroundAction("goto", (r, a, b), frozenset(), frozenset(), frozenset())
                nxt = step(world, act)
                if isinstance(nxt, ExecError):
                    return world, graph, moves
                world = nxt
                moves += 1
                graph = _move_belief(graph, r, a, b)
        graph = apply_delta(graph, observe(world, r, scenario.oracle))
        if found():
            break
    return world, graph, moves


def _move_belief(graph: KnowledgeGraph, robot: str, src: str, dst: str) -> KnowledgeGraph:
    return apply_delta(graph, GraphDelta(frozenset({(SubgraphKind.REACH, Triple(robot, "at_location", dst))}),
                                         frozenset({(SubgraphKind.REACH, Triple(robot, "at_location", src))})))


@dataclass
class _Clock:
    wall: bool
    nodes: int = 0
    secs: float = 0.0

    def charge(self, expanded: int, started: float):
        self.nodes += expanded
        self.secs += time.perf_counter() - started

    @property
    def value(self) -> float:
        return self.secs if self.wall else self.nodes * SECS_PER_NODE


def run_scenario(scenario: Scenario, variant: str = "full", *, planner: PlannerConfig | None = None,
                 replan: ReplanConfig | None = None, seed: int = 0, max_attempts: int = 6,
                 wall_clock: bool = False) -> tuple[Record, list[dict]]:
    """Plan, execute and (variant permitting) repair one scenario."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    withheld, may_replan, may_discover = VARIANTS[variant]
    planner = planner or PlannerConfig(seed=seed)
    replan = replan or ReplanConfig(planner=planner)
    domain = household_domain()
    goal_truth = ground_truth_goal(scenario)
    inventory = Inventory(scenario.types)
    task = TaskDescription(scenario.task, scenario.goal)
    ctx = ReplanContext(task, inventory, withheld, name=scenario.name)
    world = scenario.fresh_world()
    graph = scenario.initial_graph()
    clock = _Clock(wall_clock)
    planned = ok = ticks = iters = 0
    logs: list[dict] = []
    plan = gtask = problem = None
    error = trigger = None
    notes = []

    for attempt in range(max_attempts):
        if plan is None:
            t0 = time.perf_counter()
            try:
                problem = ctx.synthesize(graph, domain).problem
                gtask, result = solve(domain, problem, planner)
                clock.charge(result.expanded, t0)
                if isinstance(result, Plan):
                    plan, error = result, None
                else:
                    error = result
            except SynthesisError as exc:
                clock.charge(0, t0)
                problem, error = None, exc
        if plan is not None:
            po = deorder(plan, gtask)
            planned += len(plan)
            world, trace, err = execute(world, po)
            ok += trace.ok_count
            ticks += trace.ticks
            done = [a for a in po.actions if str(a) in set(trace.executed())]
            graph = progress_graph(graph, done)
            plan = None
            if err is None:
                error = None
                break
            error = trigger = err
        notes.append(str(error))
        if not may_replan:
            break
        before = graph
        if may_discover:
            graph = _observe_all(world, graph, scenario, error)
            if diagnose(error).cls == DiagnosticClass.PERCEPTION:
                focus = diagnose(error).focus
                world, graph, moves = _explore(world, graph, scenario, focus)
                ticks += moves
        if graph != before:
            continue  # new knowledge: plain resynthesis first
        t0 = time.perf_counter()
        ctx.world = world.copy() if replan.dry_run else None
        e0 = trigger if trigger is not None else error
        try:
            res = replan_loop(domain, ctx, graph, problem, e0, replan, base_plan=None)
        except ReplanExhausted as exc:
            clock.charge(0, t0)
            iters += len(exc.log)
            logs.extend(exc.log)
            notes.append(exc.reason)
            break
        clock.charge(res.expanded, t0)
        iters += res.iterations
        logs.extend(res.log)
        graph, problem, plan, trigger = res.graph, res.problem, res.plan, None
        if plan is None:
            break
        gtask = ground(domain, problem)

    achieved = sum(_goal_holds(world, t) for t in goal_truth)
    success = achieved == len(goal_truth)
    rec = Record(scenario.name, variant, success, len(goal_truth), achieved, planned, ok, clock.value, ticks, iters,
                 "; ".join(notes))
    for r in logs:
        r.setdefault("scenario", scenario.name)
        r.setdefault("variant", variant)
    return rec, logs


# ---------------------------------------------------------------- suites

@dataclass(frozen=True)
class SuiteSpec:
    scenarios: tuple[Path, ...]
    variant: str = "full"
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    replan: ReplanConfig = field(default_factory=ReplanConfig)
    seed: int = 0
    name: str = "suite"
    wall_clock: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {sorted(VARIANTS)}")

    def with_variant(self, variant: str) -> "SuiteSpec":
        return replace(self, variant=variant)


def load_suite(path: str | Path, *, variant: str = "full", seed: int | None = None) -> SuiteSpec:
    path = Path(path)
    data = tomllib.loads(path.read_text())
    files: list[Path] = []
    for pattern in data.get("scenarios", []):
        hits = sorted(glob.glob(str(path.parent / pattern)))
        files.extend(Path(h) for h in hits)
    pl = data.get("planner", {})
    planner = PlannerConfig(mode=pl.get("mode", "astar_hadd"), node_budget=int(pl.get("node_budget", 1_000_000)),
                            time_budget_secs=float(pl.get("time_budget_secs", 300.0)),
                            seed=seed if seed is not None else int(data.get("seed", 0)))
    rp = data.get("replan", {})
    replan = ReplanConfig(k=int(rp.get("k", 5)), lam=float(rp.get("lambda", 2.0)),
                          max_iterations=int(rp.get("max_iterations", 10)), planner=planner,
                          dry_run=bool(rp.get("dry_run", False)))
    return SuiteSpec(tuple(files), variant, planner, replan, planner.seed, data.get("name", path.stem))


@dataclass
class SuiteResult:
    report: MetricsReport
    csv_text: str
    logs: dict[str, list[dict]]
    invalid: list[str]

    @property
    def exit_code(self) -> int:
        return 1 if self.invalid else 0


def write_csv(report: MetricsReport, variant: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.records:
        w.writerow(r.row())
    w.writerow(["ALL", variant, f"{report.tcr:.4f}", sum(r.goal_total for r in report.records),
                sum(r.goal_achieved for r in report.records), sum(r.actions_planned for r in report.records),
                sum(r.actions_ok for r in report.records), f"{report.mean_pt:.6f}", f"{report.mean_et:.4f}",
                sum(r.replan_iters for r in report.records)])
    return buf.getvalue()


def run_suite(spec: SuiteSpec, *, out: str | Path | None = None, log_dir: str | Path | None = None) -> SuiteResult:
    if not spec.scenarios:
        raise EmptySuite(f"suite {spec.name} has no scenarios")
    records, logs, invalid = [], {}, []
    for path in spec.scenarios:
        try:
            scenario = load_scenario(path)
            rec, lg = run_scenario(scenario, spec.variant, planner=spec.planner, replan=spec.replan,
                                   seed=spec.seed, wall_clock=spec.wall_clock)
        except ScenarioInvalid as exc:
            log.error("skipping invalid scenario: %s", exc)
            invalid.append(str(path))
            continue
        records.append(rec)
        logs[rec.scenario] = lg
    if not records:
        raise EmptySuite(f"suite {spec.name} has no valid scenarios")
    report = compute_metrics(records)
    text = write_csv(report, spec.variant)
    if out is not None:
        Path(out).write_text(text)
    if log_dir is not None:
        d = Path(log_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, lg in sorted(logs.items()):
            (d / f"{name}.{spec.variant}.jsonl").write_text(dump_log(lg))
    return SuiteResult(report, text, logs, invalid)


def bundled_suite(name: str) -> Path:
    return Path(str(resources.files("kgplan.data").joinpath("suites", f"{name}.toml")))
