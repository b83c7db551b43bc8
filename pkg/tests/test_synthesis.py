import pytest

from kgplan.graph import SubgraphKind, Triple, insert, union_view
from kgplan.pddl import Atom, parse_problem, print_problem
from kgplan.planner import PlannerConfig, PlanNotFound, solve, validate
from kgplan.sim import load_scenario, world_to_graph
from kgplan.synthesis import (
    UNKNOWN_LOCATION,
    GoalSpec,
    Inventory,
    MissingLocation,
    RemoteProposer,
    SchemaMismatch,
    TaskDescription,
    TypeAssignmentMissing,
    UngroundableGoal,
    extract_goal,
    extract_properties,
    extract_reachability,
    extract_relations,
    generate_problem,
    init_triples,
    synthesize_problem,
)
from kgplan.vocab import household_domain

from conftest import COMPLETE, scenario

HOUSE = Inventory({"watch": "item", "keychain": "item", "drawer": "receptacle", "desk": "receptacle",
                   "cup": "item", "table": "receptacle", "robot_a": "robot", "desk_area": "location"})


def goal(*triples):
    return GoalSpec(tuple(Triple.of(*t) for t in triples))


def test_goal_from_text():
    g = extract_goal(TaskDescription("Put the watch and keychain inside the drawer"), HOUSE)
    assert set(g.goal_triples) == {Triple("watch", "in", "drawer"), Triple("keychain", "in", "drawer")}


@pytest.mark.parametrize("text, expect", [
    ("Open the drawer", {("drawer", "has_state", "open")}),
    ("put the cup on the table", {("cup", "on", "table")}),
    ("Put the cup on the table and then put the watch in the drawer",
     {("cup", "on", "table"), ("watch", "in", "drawer")}),
])
def test_goal_templates(text, expect):
    assert set(extract_goal(TaskDescription(text), HOUSE).goal_triples) == {Triple(*t) for t in expect}


def test_structured_goal_passes_through():
    task = TaskDescription("tidy up", structured_goal=(("cup", "on", "table"),))
    assert extract_goal(task, HOUSE).goal_triples == (Triple("cup", "on", "table"),)
    bad = TaskDescription("tidy up", structured_goal=(("vase", "on", "table"),))
    with pytest.raises(UngroundableGoal):
        extract_goal(bad, HOUSE)


def test_ungroundable_goal():
    with pytest.raises(UngroundableGoal):
        extract_goal(TaskDescription("dance the tango"), HOUSE)
    with pytest.raises(UngroundableGoal):
        extract_goal(TaskDescription("put the cup on the table"), Inventory({}))


def test_relations_closure():
    g_rel = {Triple("cup", "on", "table"), Triple("plate", "on", "counter")}
    assert extract_relations(goal(("cup", "on", "table")), None, g_rel) == {Atom("on", ("cup", "table"))}
    assert extract_relations(goal(("cup", "on", "table")), None, set()) == frozenset()


def test_relations_depth():
    chain = {Triple("ring", "in", "box"), Triple("box", "on", "shelf"), Triple("shelf", "in", "closet")}
    g = goal(("ring", "on", "table"))
    assert extract_relations(g, None, chain, depth=1) == {Atom("in", ("ring", "box"))}
    assert extract_relations(g, None, chain, depth=2) == {Atom("in", ("ring", "box")), Atom("on", ("box", "shelf"))}


def test_relations_never_contain_unobserved_goal_atoms(drawer):
    g = extract_goal(TaskDescription(drawer.task), Inventory(drawer.types))
    graph = drawer.initial_graph()
    rel = extract_relations(g, None, graph.subgraph(SubgraphKind.RELATION))
    present = {Atom(t.relation, (t.subject, t.object)) for t in graph.subgraph(SubgraphKind.RELATION)}
    assert not (g.atoms() & rel) - present
    assert rel <= present


def test_properties():
    g_prop = {Triple("robot_a", "has_capability", "pickup"), Triple("sofa", "has_property", "surface")}
    out = extract_properties(goal(("cup", "on", "table")), None, set(), g_prop, robots=["robot_a"])
    assert out == {Atom("has_capability", ("robot_a", "pickup"))}


def test_drawer_gap_surfaces_as_unsolvable(drawer):
    # correct the stale belief but leave the affordance gap in place
    fixed = insert(drawer.initial_graph(), SubgraphKind.PROPERTY, Triple("drawer", "has_state", "closed"))
    synth = generate_problem(fixed, TaskDescription(drawer.task), Inventory(drawer.types))
    assert Atom("openable", ("drawer",)) not in synth.problem.init
    _, result = solve(household_domain(), synth.problem)
    assert isinstance(result, PlanNotFound)


def test_reachability():
    g_reach = {Triple("microwave", "at_location", "location_1"), Triple("robot_a", "at_location", "location_1"),
               Triple("location_1", "connected", "location_2")}
    props = {Atom("has_state", ("microwave", "closed"))}
    out = extract_reachability(set(), props, g_reach, robots=["robot_a"])
    assert out == {Atom("at_location", ("microwave", "location_1")), Atom("at_location", ("robot_a", "location_1")),
                   Atom("connected", ("location_1", "location_2"))}
    only_robot = extract_reachability(set(), set(), {Triple("robot_a", "at_location", "location_1")},
                                      robots=["robot_a"])
    assert only_robot == {Atom("at_location", ("robot_a", "location_1"))}
    with pytest.raises(MissingLocation) as info:
        extract_reachability({Atom("on", ("cup", "table"))}, set(),
                             {Triple("table", "at_location", "location_1")})
    assert info.value.entity == "cup"


def test_reachability_skips_held_items():
    rel = {Atom("holding", ("robot_a", "cup"))}
    out = extract_reachability(rel, set(), {Triple("robot_a", "at_location", "hall")}, robots=["robot_a"])
    assert out == {Atom("at_location", ("robot_a", "hall"))}


def test_synthesize_trivial_problem():
    init_rel = {Atom("on", ("cup", "table"))}
    p = synthesize_problem(goal(("cup", "on", "table")), init_rel, set(), set(), types=HOUSE.types)
    _, result = solve(household_domain(), p)
    assert result.cost == 0
    assert parse_problem(print_problem(p), household_domain()) == p


def test_synthesize_errors():
    with pytest.raises(SchemaMismatch):
        synthesize_problem(goal(("cup", "on", "table")), set(), {Atom("sliceable", ("cup", "extra_arg"))}, set(),
                           types={**HOUSE.types, "extra_arg": "item"})
    with pytest.raises(SchemaMismatch):
        synthesize_problem(goal(("cup", "on", "table")), {Atom("beside", ("cup", "table"))}, set(), set(),
                           types=HOUSE.types)
    with pytest.raises(TypeAssignmentMissing):
        synthesize_problem(goal(("cup", "on", "table")), set(), set(), set(), types={"cup": "item"})


def test_complete_drawer_fixture_opens_first(drawer):
    graph = world_to_graph(drawer.fresh_world())
    synth = generate_problem(graph, TaskDescription(drawer.task), Inventory(drawer.types))
    task, plan = solve(household_domain(), synth.problem, PlannerConfig(mode="optimal_bfs"))
    assert validate(plan, task)
    assert plan.actions[0].name == "open" and plan.actions[0].args[1] == "drawer"
    assert [a.name for a in plan.actions].count("put_in") == 2


@pytest.mark.parametrize("path", COMPLETE, ids=lambda p: p.stem)
def test_bundled_scenarios_ground_in_the_graph(path):
    sc = load_scenario(path)
    graph = sc.initial_graph()
    synth = generate_problem(graph, TaskDescription(sc.task, sc.goal), Inventory(sc.types), name=sc.name)
    assert {t for _, t in init_triples(synth.problem)} <= union_view(graph)
    task, plan = solve(household_domain(), synth.problem)
    assert validate(plan, task)
    again = generate_problem(graph, TaskDescription(sc.task, sc.goal), Inventory(sc.types), name=sc.name)
    assert print_problem(again.problem) == print_problem(synth.problem)


def test_withheld_reach_uses_shared_place():
    sc = scenario("cup_to_table")
    synth = generate_problem(sc.initial_graph(), TaskDescription(sc.task, sc.goal), Inventory(sc.types),
                             withheld=[SubgraphKind.REACH])
    places = {a.args[1] for a in synth.problem.init if a.predicate == "at_location"}
    assert places == {UNKNOWN_LOCATION}
    assert synth.bundle.prior_atoms


class FakeModel:
    """Scripted endpoint: a queue of replies per stage."""

    def __init__(self, replies):
        self.replies = {k: list(v) for k, v in replies.items()}
        self.seen = []

    def __call__(self, url, payload, timeout):
        self.seen.append(payload)
        return self.replies[payload["stage"]].pop(0)


def drawer_replies():
    return {
        "goal": ["goal watch in drawer\ngoal keychain in drawer"],
        "relation": ["relation watch on desk\nrelation keychain on desk"],
        "property": ["\n".join([
            "property robot_a has_capability pickup", "property robot_a has_capability open_close",
            "property robot_a has_state hand_empty", "property drawer has_state closed",
            "property drawer has_property container", "property drawer has_property openable",
            "property desk has_property surface"])],
        "reach": ["\n".join(f"reach {x} at_location desk_area" for x in ("robot_a", "watch", "keychain", "drawer",
                                                                          "desk"))],
    }


def test_remote_proposer_matches_rule_based(drawer):
    graph = world_to_graph(drawer.fresh_world())
    model = FakeModel(drawer_replies())
    remote = RemoteProposer("http://model.invalid/v1", transport=model)
    task = TaskDescription(drawer.task)
    inv = Inventory(drawer.types)
    via_model = generate_problem(graph, task, inv, proposer=remote)
    via_rules = generate_problem(graph, task, inv)
    assert via_model.problem == via_rules.problem
    assert [c["stage"] for c in model.seen] == ["goal", "relation", "property", "reach"]
    prompt = model.seen[0]["prompt"]
    assert drawer.task in prompt and "keychain" in prompt and "{" not in prompt


def test_remote_proposer_retries_then_rejects(drawer):
    graph = world_to_graph(drawer.fresh_world())
    replies = drawer_replies()
    replies["relation"] = ["relation watch on sofa", "garbage", "relation watch on desk"]
    model = FakeModel(replies)
    generate_problem(graph, TaskDescription(drawer.task), Inventory(drawer.types),
                     proposer=RemoteProposer("http://model.invalid", transport=model))
    assert [c["stage"] for c in model.seen].count("relation") == 3

    replies = drawer_replies()
    replies["relation"] = ["relation watch on sofa"] * 3
    with pytest.raises(SchemaMismatch):
        generate_problem(graph, TaskDescription(drawer.task), Inventory(drawer.types),
                         proposer=RemoteProposer("http://model.invalid", transport=FakeModel(replies)))


def test_remote_goal_outside_inventory(drawer):
    replies = drawer_replies()
    replies["goal"] = ["goal vase in drawer"] * 3
    with pytest.raises(UngroundableGoal):
        generate_problem(drawer.initial_graph(), TaskDescription(drawer.task), Inventory(drawer.types),
                         proposer=RemoteProposer("http://model.invalid", transport=FakeModel(replies)))
