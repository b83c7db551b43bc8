"""
Recovering from a closed drawer
===============================

The robot believes the drawer is open and does not know it can be opened.
Execution fails, the failure reveals the drawer is closed, and the replanner
proposes the missing affordance.
"""

from kgplan.bench import bundled_suite, run_scenario
from kgplan.planner import deorder, solve
from kgplan.sim import execute, load_scenario
from kgplan.synthesis import Inventory, TaskDescription, generate_problem
from kgplan.vocab import household_domain

drawer = load_scenario(bundled_suite("main").parent.parent / "scenarios" / "main" / "drawer_watch_keychain.toml")

# plan on stale beliefs: no open action, the drawer is assumed open
synth = generate_problem(drawer.initial_graph(), TaskDescription(drawer.task), Inventory(drawer.types))
task, plan = solve(household_domain(), synth.problem)
print(plan.to_text())

# execution stops at the first put_in
world, trace, err = execute(drawer.fresh_world(), deorder(plan, task))
print(err)

# without replanning the run ends here
rec, _ = run_scenario(drawer, "no_replan")
print("no_replan success:", rec.success)

# with replanning, one hypothesis is committed and the new plan opens the drawer first
rec, log = run_scenario(drawer, "full")
print("full success:", rec.success, "iterations:", rec.replan_iters)
for entry in log:
    for c in entry.get("candidates", []):
        print(f"  {c['hypothesis']:<48} p={c['p']:.2f} dc={c['delta_cost']} score={c['score']:.3f}")
    print("  selected:", entry.get("selected"))
