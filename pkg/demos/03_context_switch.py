"""Replay of a single context switch.

PF1 always overruns its expected time, so the dispatcher climbs into high
mode before PF2's switch point and drops back once PF2 finishes within its
expected time.
"""

from mcsdispatch import ExecTimeModel, load_scenario, ms_to_cycles, run
from mcsdispatch.timing import cycles_to_ms, switch_time
from mcsdispatch.trace import Rec

sc = load_scenario("casestudy")
pf1, pf2 = sc.task(1), sc.task(2)
models = dict(sc.exec_models)
models[1] = ExecTimeModel.empirical([pf1.t_wcet])
models[2] = ExecTimeModel.constant(pf2.t_eet)
sc = sc.replace(exec_models=models, horizon=ms_to_cycles(45))

trace = run(sc, 0)
print(f"T_switch for PF2: {cycles_to_ms(switch_time(0, pf2, sc.o_switch).time):.6f} ms")
for r in trace:
    if r.kind is Rec.MODE or (r.task in (1, 2) and r.kind in (Rec.DISPATCH, Rec.START, Rec.COMPLETE)):
        who = "mode" if r.kind is Rec.MODE else sc.task(r.task).name
        print(f"{cycles_to_ms(r.time):10.6f} ms  {r.kind.name:<8} {who:<5} tile {r.tile:>2} mode {r.mode}")

# %%
# PF2 does not start at T_switch: an FFT that began just before has to finish
# first, since tiles are never preempted.
