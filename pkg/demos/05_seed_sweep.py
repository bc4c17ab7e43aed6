"""Small seed sweep with the aggregate statistics the CLI reports.

The CLI default is 30 seeds; 4 keeps this demo around a minute and a half.
"""

from mcsdispatch import aggregate, load_scenario
from mcsdispatch.cli import sweep

sc = load_scenario("casestudy")
reports = sweep(sc, master_seed=1, runs=4,
                progress=lambda i, seed, rep: print(f"run {i}: idle reduction {rep.idle_reduction_pct:.2f}%"))
agg = aggregate(reports)
for key in ("idle_reduction_pct", "low_throughput_ratio"):
    print(key, {k: round(v, 4) for k, v in agg[key].items() if isinstance(v, float)})
print("dynamic high misses:", agg["high_deadline_misses_dynamic"])
