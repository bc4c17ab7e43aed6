"""Timing budget of the case study: laxity, switch point and the switch overhead.

Everything here is integer cycles at the scenario clock. Run it with
``python3 demos/01_timing_budget.py``.
"""

from mcsdispatch import load_scenario
from mcsdispatch.timing import (TimingParams, copy_time, cycles_to_ms, laxity, switch_overhead,
                                switch_time, worst_low_task)

sc = load_scenario("casestudy")
params = sc.timing

# %%
# Each high task may start at most ``laxity`` cycles after its arrival.
for t in sc.tasks:
    if t.is_high:
        print(f"{t.name}: wcet {cycles_to_ms(t.t_wcet):g} ms, deadline {cycles_to_ms(t.deadline):g} ms, "
              f"laxity {laxity(t)} cycles")

# %%
# The dispatcher must be in high mode at T_switch = arrival + laxity - O_switch.
pf = sc.task(1)
point = switch_time(0, pf, sc.o_switch)
print(f"O_switch in use: {sc.o_switch} cycles; switch point for a release at 0: {point.time} "
      f"(feasible: {point.feasible})")

# %%
# Two ways of estimating O_switch. Leaving out the worst low task gives the
# small figure; including it accounts for a low job that is already running.
fft = worst_low_task(sc.tasks)
small = switch_overhead(TimingParams.defaults(), None, 16384)
full = switch_overhead(TimingParams.defaults(), fft, 16384)
print(f"without low blocking: {small} cycles ({cycles_to_ms(small):.4g} ms)")
print(f"with {fft.name} blocking: {full} cycles ({cycles_to_ms(full):.7g} ms after rounding up)")

# %%
# Copy cost is affine in the buffer size.
for n in (32, 2048, 16384):
    print(f"copy {n:>6} B -> {copy_time(params.copy_model, n)} cycles")
