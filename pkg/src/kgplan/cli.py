"""``kgplan`` command line."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .graph import ParseError, check_consistency, deserialize, serialize
from .pddl import GroundAction, PddlError, parse_domain, parse_problem, print_domain, print_problem
from .planner import Plan, PlannerConfig, solve
from .replan import ReplanConfig, dump_log
from .sim import ScenarioInvalid, execute, load_scenario
from .synthesis import Inventory, SynthesisError, TaskDescription, generate_problem
from .vocab import household_domain


def _domain(path: str | None):
    return parse_domain(Path(path).read_text()) if path else household_domain()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_kg(args) -> int:
    if args.action == "dump":
        _emit(serialize(load_scenario(args.scenario).initial_graph()), args.out)
        return 0
    g = deserialize(Path(args.file).read_text())
    problems = check_consistency(g)
    print(repr(g))
    for v in problems:
        print(v)
    return 1 if problems else 0


def cmd_pddl(args) -> int:
    domain = parse_domain(Path(args.domain).read_text())
    text = print_domain(domain)
    if args.problem:
        text += "\n" + print_problem(parse_problem(Path(args.problem).read_text(), domain))
    _emit(text, args.out)
    return 0


def cmd_plan(args) -> int:
    domain = _domain(args.domain)
    problem = parse_problem(Path(args.problem).read_text(), domain)
    cfg = PlannerConfig(mode=args.mode, node_budget=args.node_budget, time_budget_secs=args.time_budget)
    _, result = solve(domain, problem, cfg)
    if not isinstance(result, Plan):
        print(result, file=sys.stderr)
        return 2
    _emit(result.to_text(), args.out)
    return 0


def cmd_synth(args) -> int:
    sc = load_scenario(args.scenario)
    withheld = bench.VARIANTS[args.variant][0]
    synth = generate_problem(sc.initial_graph(), TaskDescription(sc.task, sc.goal), Inventory(sc.types),
                             withheld=withheld, name=sc.name)
    _emit(print_problem(synth.problem), args.out)
    return 0


def read_plan(text: str) -> list[GroundAction]:
    actions = []
    for line in text.splitlines():
        line = line.split(";", 1)[0].strip()
        if not line:
            continue
        if ":" in line.split("(", 1)[0]:
            line = line.split(":", 1)[1].strip()
        parts = line.strip("()").split()
        if parts:
            actions.append(GroundAction(parts[0].lower(), tuple(p.lower() for p in parts[1:])))
    return actions


def cmd_sim(args) -> int:
    sc = load_scenario(args.scenario)
    world, trace, err = execute(sc.fresh_world(), read_plan(Path(args.plan).read_text()))
    for r in trace.records:
        print(f"{r.step}\t{r.outcome}\t{r.action}")
    print(f"; ticks = {trace.ticks}")
    if err is not None:
        print(err, file=sys.stderr)
        return 3
    return 0


def cmd_replan(args) -> int:
    sc = load_scenario(args.scenario)
    planner = PlannerConfig()
    cfg = ReplanConfig(k=args.k, lam=args.lam, max_iterations=args.max_iter, planner=planner, dry_run=args.dry_run)
    rec, logs = bench.run_scenario(sc, "full", planner=planner, replan=cfg)
    if args.log:
        Path(args.log).write_text(dump_log(logs))
    print(f"{sc.name}: success={rec.success} replan_iters={rec.replan_iters} "
          f"goals={rec.goal_achieved}/{rec.goal_total}")
    return 0 if rec.success else 4


def cmd_bench(args) -> int:
    path = Path(args.suite)
    if not path.exists():
        path = bench.bundled_suite(args.suite)
    spec = bench.load_suite(path, variant=args.variant, seed=args.seed)
    if args.wall_clock:
        spec = replace(spec, wall_clock=True)
    res = bench.run_suite(spec, out=args.out, log_dir=args.log_dir)
    if not args.out:
        sys.stdout.write(res.csv_text)
    print(res.report.summary(), file=sys.stderr)
    return res.exit_code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgplan", description="Knowledge-graph grounded planning for robot teams.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("kg", help="dump or check knowledge graphs")
    kg_sub = kg.add_subparsers(dest="action", required=True)
    d = kg_sub.add_parser("dump", help="initial belief graph of a scenario")
    d.add_argument("--scenario", required=True)
    d.add_argument("--out")
    ld = kg_sub.add_parser("load", help="parse a graph file and report inconsistencies")
    ld.add_argument("file")
    kg.set_defaults(func=cmd_kg)

    pd = sub.add_parser("pddl", help="parse, validate and pretty-print PDDL")
    pd_sub = pd.add_subparsers(dest="action", required=True)
    chk = pd_sub.add_parser("check")
    chk.add_argument("domain")
    chk.add_argument("problem", nargs="?")
    chk.add_argument("--out")
    pd.set_defaults(func=cmd_pddl)

    pl = sub.add_parser("plan", help="solve a PDDL problem")
    pl.add_argument("--domain", help="domain file (default: bundled household domain)")
    pl.add_argument("--problem", required=True)
    pl.add_argument("--mode", default="astar_hadd", choices=["optimal_bfs", "greedy_hadd", "astar_hadd"])
    pl.add_argument("--node-budget", type=int, default=1_000_000)
    pl.add_argument("--time-budget", type=float, default=300.0)
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plan)

    sy = sub.add_parser("synth", help="build a PDDL problem from a scenario")
    sy.add_argument("--scenario", required=True)
    sy.add_argument("--variant", default="full", choices=sorted(bench.VARIANTS))
    sy.add_argument("--out")
    sy.set_defaults(func=cmd_synth)

    si = sub.add_parser("sim", help="execute a plan file in a scenario world")
    si.add_argument("--scenario", required=True)
    si.add_argument("--plan", required=True)
    si.set_defaults(func=cmd_sim)

    rp = sub.add_parser("replan", help="run a scenario with failure-driven repair")
    rp.add_argument("--scenario", required=True)
    rp.add_argument("--k", type=int, default=5)
    rp.add_argument("--lambda", dest="lam", type=float, default=2.0)
    rp.add_argument("--max-iter", type=int, default=10)
    rp.add_argument("--dry-run", action="store_true", help="probe repaired plans in the simulator")
    rp.add_argument("--log")
    rp.set_defaults(func=cmd_replan)

    be = sub.add_parser("bench", help="run a scenario suite and write report.csv")
    be.add_argument("--suite", required=True, help="suite file, or the name of a bundled suite")
    be.add_argument("--variant", default="full", choices=sorted(bench.VARIANTS))
    be.add_argument("--seed", type=int, default=None)
    be.add_argument("--out")
    be.add_argument("--log-dir")
    be.add_argument("--wall-clock", action="store_true", help="report measured planning time")
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ParseError, PddlError, SynthesisError, ScenarioInvalid, bench.EmptySuite, OSError) as exc:
        print(f"kgplan: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
