import subprocess
import sys

import pytest

from kgplan.cli import main, read_plan
from kgplan.graph import deserialize
from kgplan.pddl import parse_problem
from kgplan.vocab import household_domain

from conftest import DATA, scenario

DRAWER = str(DATA / "scenarios" / "main" / "drawer_watch_keychain.toml")
CUP = str(DATA / "scenarios" / "main" / "cup_to_table.toml")


def test_kg_dump_and_load(tmp_path, capsys):
    out = tmp_path / "drawer.kg"
    assert main(["kg", "dump", "--scenario", DRAWER, "--out", str(out)]) == 0
    assert deserialize(out.read_text()).content() == scenario("drawer_watch_keychain").initial_graph().content()
    assert main(["kg", "load", str(out)]) == 0
    broken = tmp_path / "broken.kg"
    broken.write_text("relation cup on\n")
    assert main(["kg", "load", str(broken)]) == 1
    assert "line 1" in capsys.readouterr().err


def test_synth_plan_sim_pipeline(tmp_path, capsys):
    problem = tmp_path / "cup.pddl"
    assert main(["synth", "--scenario", CUP, "--out", str(problem)]) == 0
    parse_problem(problem.read_text(), household_domain())
    plan = tmp_path / "cup.plan"
    assert main(["plan", "--problem", str(problem), "--mode", "optimal_bfs", "--out", str(plan)]) == 0
    lines = plan.read_text().splitlines()
    assert lines[0].startswith("0: (") and lines[-1].startswith("; cost = ")
    assert len(read_plan(plan.read_text())) == int(lines[-1].split("=")[1])
    assert main(["sim", "--scenario", CUP, "--plan", str(plan)]) == 0
    assert "ok" in capsys.readouterr().out


def test_sim_reports_failure(tmp_path, capsys):
    plan = tmp_path / "naive.plan"
    plan.write_text("(pickup robot_a watch desk desk_area)\n(put_in robot_a watch drawer desk_area)\n")
    assert main(["sim", "--scenario", DRAWER, "--plan", str(plan)]) == 3
    assert "drawer is closed" in capsys.readouterr().err


def test_pddl_check(tmp_path, capsys):
    domain = DATA / "household.pddl"
    assert main(["pddl", "check", str(domain)]) == 0
    assert "(define (domain household)" in capsys.readouterr().out
    bad = tmp_path / "bad.pddl"
    bad.write_text("(define (domain d) (:predicates (p ?x)) (:action a :parameters (?x) :precondition (q ?x)))")
    assert main(["pddl", "check", str(bad)]) == 1


def test_plan_failure_exit_code(tmp_path):
    problem = tmp_path / "stuck.pddl"
    problem.write_text("(define (problem stuck) (:domain household) (:objects a b - location)"
                       " (:init) (:goal (connected a b)))")
    assert main(["plan", "--problem", str(problem)]) == 2


def test_replan_command(tmp_path, capsys):
    log = tmp_path / "drawer.jsonl"
    assert main(["replan", "--scenario", DRAWER, "--log", str(log)]) == 0
    assert "success=True" in capsys.readouterr().out
    assert '"selected": "+property (drawer, has_property, openable)"' in log.read_text()


def test_bench_command(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["bench", "--suite", "hidden", "--variant", "partial_obs", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[-1].startswith("ALL,partial_obs,0.0000")


def test_unknown_variant_is_rejected():
    with pytest.raises(SystemExit):
        main(["bench", "--suite", "main", "--variant", "half"])


def test_console_entry_point():
    done = subprocess.run([sys.executable, "-m", "kgplan.cli", "--help"], capture_output=True, text=True)
    assert done.returncode == 0
    for sub in ("kg", "pddl", "plan", "synth", "sim", "replan", "bench"):
        assert sub in done.stdout
