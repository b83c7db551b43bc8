"""
Objects nobody has seen yet
===========================

In the hidden-object suite every target starts out of sight. Only robots
that observe the rooms they walk into can finish these tasks.
"""

from kgplan.bench import bundled_suite, load_suite, run_suite

spec = load_suite(bundled_suite("hidden"))

with_eyes = run_suite(spec).report
blind = run_suite(spec.with_variant("partial_obs")).report
print("with discovery   ", with_eyes.summary())
print("without discovery", blind.summary())

# exploration costs execution ticks, which shows up in ET
for r in with_eyes.records:
    print(f"{r.scenario:<28} ticks={r.et_ticks:<3} iterations={r.replan_iters}")
