"""
From a knowledge graph to a PDDL problem
=========================================

Build a belief graph for a small scene, query it, then let the rule-based
pipeline turn a sentence into a planning problem and solve it.
"""

from kgplan.bench import bundled_suite
from kgplan.graph import SubgraphKind, query, serialize
from kgplan.pddl import print_problem
from kgplan.planner import solve
from kgplan.sim import load_scenario
from kgplan.synthesis import Inventory, TaskDescription, generate_problem
from kgplan.vocab import household_domain

# scenarios ship with the package; the suite file sits next to them
scenarios = bundled_suite("main").parent.parent / "scenarios" / "main"
sc = load_scenario(scenarios / "cup_to_table.toml")

# the team's belief graph is split into relation, property and reach facts
graph = sc.initial_graph()
for kind in SubgraphKind:
    print(f"{kind.value:>9}: {len(graph.subgraph(kind))} facts")

# pattern queries use None as a wildcard
print(query(graph, ("cup", None, None)))

# graphs serialize to a plain line format
print(serialize(graph).splitlines()[:3])

# text goal -> relations, properties, reachability -> problem
synth = generate_problem(graph, TaskDescription(sc.task), Inventory(sc.types), name=sc.name)
print(print_problem(synth.problem))

_, plan = solve(household_domain(), synth.problem)
print(plan.to_text())
