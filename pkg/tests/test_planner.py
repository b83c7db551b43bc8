import random
import time

import pytest

from kgplan.pddl import Atom, GroundAction, GroundedTask, ground, parse_domain, parse_problem
from kgplan.planner import (
    Invalid,
    InvalidPlanInput,
    Plan,
    PlanNotFound,
    PlannerConfig,
    Valid,
    cost,
    deorder,
    linearizations,
    plan,
    solve,
    validate,
)
from kgplan.vocab import household_domain

from oracles import dijkstra_cost, random_task

BFS = PlannerConfig(mode="optimal_bfs")


def at(r, loc):
    return Atom("at", (r, loc))


def move(r, a, b):
    return GroundAction("move", (r, a, b), {at(r, a)}, {at(r, b)}, {at(r, a)})


@pytest.fixture
def chain():
    locs = "abc"
    acts = tuple(move("r1", x, y) for x in locs for y in locs if abs(ord(x) - ord(y)) == 1)
    atoms = frozenset(at("r1", x) for x in locs)
    return GroundedTask(atoms, acts, frozenset({at("r1", "a")}), frozenset({at("r1", "c")}))


def test_goal_in_init_gives_empty_plan(chain):
    task = GroundedTask(chain.atoms, chain.actions, chain.init, chain.init)
    result = plan(task, BFS)
    assert isinstance(result, Plan) and result.cost == 0 and cost(result) == 0


@pytest.mark.parametrize("mode", ["optimal_bfs", "greedy_hadd", "astar_hadd"])
def test_chain(chain, mode):
    result = plan(chain, PlannerConfig(mode=mode))
    assert list(result.actions) == [move("r1", "a", "b"), move("r1", "b", "c")]
    assert result.cost == 2
    assert validate(result, chain)


def test_plan_text(chain):
    text = plan(chain, BFS).to_text()
    assert text.splitlines() == ["0: (move r1 a b)", "1: (move r1 b c)", "; cost = 2"]


def test_optimal_matches_dijkstra():
    """At least 200 random tasks, each small enough for exhaustive search."""
    rng = random.Random(2024)
    start = time.perf_counter()
    checked = solvable = 0
    while checked < 300:
        task = random_task(rng)
        expect, n_states = dijkstra_cost(task)
        assert n_states <= 10_000
        got = plan(task, BFS)
        if expect is None:
            assert isinstance(got, PlanNotFound) and got.reason == "exhausted"
        else:
            solvable += 1
            assert got.cost == expect
            assert validate(got, task)
        for mode in ("greedy_hadd", "astar_hadd"):
            h = plan(task, PlannerConfig(mode=mode))
            assert bool(h) == (expect is not None)
            if h:
                assert validate(h, task)
        checked += 1
    assert solvable >= 100
    assert time.perf_counter() - start < 60


def test_budget_exceeded():
    rng = random.Random(9)
    for _ in range(50):
        task = random_task(rng, n_atoms=11, n_actions=14)
        expect, _ = dijkstra_cost(task)
        if expect and expect >= 3:
            break
    result = plan(task, PlannerConfig(mode="optimal_bfs", node_budget=1))
    assert isinstance(result, PlanNotFound) and result.reason == "budget_exceeded"


DRAWER_PROBLEM = """
(define (problem drawer) (:domain household)
  (:objects robot_a - robot kitchen - location drawer - receptacle keychain - item)
  (:init (at_location robot_a kitchen) (at_location drawer kitchen)
         (holding robot_a keychain)
         (has_state drawer closed) (container drawer)
         (has_capability robot_a pickup) (has_capability robot_a open_close))
  (:goal (in keychain drawer)))
"""


def test_closed_drawer_without_openable_is_unsolvable():
    d = household_domain()
    p = parse_problem(DRAWER_PROBLEM, d)
    _, result = solve(d, p, BFS)
    assert isinstance(result, PlanNotFound)
    assert result.reason == "exhausted"
    fixed = parse_problem(DRAWER_PROBLEM.replace("(container drawer)", "(container drawer) (openable drawer)"), d)
    _, ok = solve(d, fixed, BFS)
    assert [a.name for a in ok.actions] == ["open", "put_in"]


def test_validate(chain):
    good = [move("r1", "a", "b"), move("r1", "b", "c")]
    assert isinstance(validate(good, chain), Valid)
    swapped = validate(good[::-1], chain)
    assert swapped == Invalid(0, frozenset({at("r1", "b")}))
    assert validate([], chain) == Invalid("end", chain.goal - chain.init)


def test_cost_matches_length_on_random_plans():
    rng = random.Random(4)
    for _ in range(100):
        task = random_task(rng)
        result = plan(task, PlannerConfig(mode="greedy_hadd"))
        if result:
            assert validate(result, task)
            assert cost(result) == len(result.actions)


def two_room_task():
    acts = (move("r1", "a", "b"), move("r2", "c", "d"), move("r1", "b", "a"), move("r2", "d", "c"))
    atoms = frozenset(at(r, x) for r, x in [("r1", "a"), ("r1", "b"), ("r2", "c"), ("r2", "d")])
    return GroundedTask(atoms, acts, frozenset({at("r1", "a"), at("r2", "c")}),
                        frozenset({at("r1", "b"), at("r2", "d")}))


def test_deorder_independent_robots():
    task = two_room_task()
    p = Plan((move("r1", "a", "b"), move("r2", "c", "d")))
    assert deorder(p, task).order == frozenset()


def test_deorder_keeps_producer_consumer():
    d = household_domain()
    fixed = parse_problem(DRAWER_PROBLEM.replace("(container drawer)", "(container drawer) (openable drawer)"), d)
    task, p = solve(d, fixed, BFS)
    assert (0, 1) in deorder(p, task).order


def test_deorder_rejects_invalid_plan(chain):
    with pytest.raises(InvalidPlanInput):
        deorder(Plan((move("r1", "b", "c"),)), chain)


DELIVERY = """
(define (domain delivery)
  (:requirements :strips :typing)
  (:types robot item location)
  (:predicates (at ?r - robot ?l - location) (obj_at ?o - item ?l - location) (carry ?r - robot ?o - item)
               (free ?r - robot) (link ?a - location ?b - location))
  (:action go :parameters (?r - robot ?a - location ?b - location)
    :precondition (and (at ?r ?a) (link ?a ?b)) :effect (and (at ?r ?b) (not (at ?r ?a))))
  (:action grab :parameters (?r - robot ?o - item ?l - location)
    :precondition (and (at ?r ?l) (obj_at ?o ?l) (free ?r))
    :effect (and (carry ?r ?o) (not (obj_at ?o ?l)) (not (free ?r))))
  (:action drop :parameters (?r - robot ?o - item ?l - location)
    :precondition (and (at ?r ?l) (carry ?r ?o))
    :effect (and (obj_at ?o ?l) (free ?r) (not (carry ?r ?o)))))
"""

DELIVERY_PROBLEM = """
(define (problem two) (:domain delivery)
  (:objects r1 r2 - robot x y - item a b c d - location)
  (:init (at r1 a) (at r2 c) (obj_at x a) (obj_at y c) (free r1) (free r2)
         (link a b) (link b a) (link c d) (link d c))
  (:goal (and (obj_at x b) (obj_at y d) (at r1 a) (at r2 c))))
"""


def test_all_linearizations_validate():
    d = parse_domain(DELIVERY)
    task = ground(d, parse_problem(DELIVERY_PROBLEM, d))
    p = plan(task, BFS)
    assert p.cost == 8
    po = deorder(p, task)
    assert po.is_acyclic()
    r1 = {i for i, a in enumerate(p.actions) if a.args[0] == "r1"}
    assert not any((i in r1) != (j in r1) for i, j in po.order)
    samples = linearizations(po, random.Random(0), 1000)
    assert len({tuple(map(repr, s)) for s in samples}) > 1
    assert all(validate(s, task) for s in samples)


def test_plan_is_deterministic():
    d = parse_domain(DELIVERY)
    task = ground(d, parse_problem(DELIVERY_PROBLEM, d))
    for mode in ("optimal_bfs", "greedy_hadd", "astar_hadd"):
        texts = {plan(task, PlannerConfig(mode=mode)).to_text() for _ in range(3)}
        assert len(texts) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(mode="dfs")
    with pytest.raises(ValueError):
        PlannerConfig(node_budget=0)
