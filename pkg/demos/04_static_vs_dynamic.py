"""Paired comparison against the static mapping on the same job releases."""

import json

from mcsdispatch import compare, load_scenario, run, run_static

sc = load_scenario("casestudy")
seed = 42
report = compare(run(sc, seed), run_static(sc, seed=seed))

print(f"idle time: static {report.idle_static} vs dynamic {report.idle_dynamic} cycles "
      f"({report.idle_reduction_pct:.2f}% less)")
print(f"low jobs completed: static {report.low_completed[0]}, dynamic {report.low_completed[1]} "
      f"(x{report.low_throughput_ratio:.3f})")
print(f"high misses (static, dynamic): {report.high_deadline_misses}")
print(json.dumps(report.to_dict()["tiles"], indent=1))
