"""
Which subgraphs matter
======================

Run the bundled 20-task suite with parts of the knowledge graph withheld.
"""

from kgplan.bench import bundled_suite, load_suite, run_suite

spec = load_suite(bundled_suite("main"))

# each variant hides some subgraphs or turns off replanning
for variant in ["full", "no_replan", "no_reach", "no_reach_property", "no_graphs"]:
    report = run_suite(spec.with_variant(variant)).report
    print(f"{variant:>18}  {report.summary()}")

# per-task rows are kept in the report for closer inspection
full = run_suite(spec).report
print([r.scenario for r in full.records if r.replan_iters])
