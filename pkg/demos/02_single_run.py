"""One dynamic run of the case study and the tile usage it produces."""

from mcsdispatch import load_scenario, ms_to_cycles, run, tile_usage, histogram, high_deadline_misses
from mcsdispatch.timing import cycles_to_ms
from mcsdispatch.trace import Rec

sc = load_scenario("casestudy").with_horizon(ms_to_cycles(450))
trace = run(sc, seed=7)
print(f"{len(trace)} trace records, {trace.count(Rec.MODE)} mode changes, "
      f"{high_deadline_misses(trace)} high deadline misses")

# Busy, overhead and idle time add up to the horizon on every tile
usage = tile_usage(trace)
for tile, u in usage.tiles.items():
    share = {sc.task(t).name: round(100 * c / sc.horizon, 1) for t, c in u.busy_by_task.items()}
    print(f"tile {tile}: idle {100 * u.idle / sc.horizon:5.1f}%  busy by task {share}")

# Loop iteration lengths, straight from the LOOP records
h = histogram(trace, "loop_time", bins=5)
for right, count in h.rows:
    print(f"  loop <= {cycles_to_ms(right) * 1e3:7.3f} us: {count}")
