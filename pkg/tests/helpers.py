"""Builders for small hand-made scenarios."""

from mcsdispatch.engine import ExecTimeModel
from mcsdispatch.model import Criticality, TaskDef, Tile
from mcsdispatch.scenario import Scenario, StaticAssignment
from mcsdispatch.timing import TimingParams, ms_to_cycles

HIGH, LOW = Criticality.HIGH, Criticality.LOW


def pool3():
    """Tile 1 high-only, tile 2 shared (low in Low mode, high in High mode), tile 3 low-only."""
    return (Tile(1, {HIGH}, {HIGH}), Tile(2, {LOW}, {HIGH}), Tile(3, {LOW}, {LOW}))


def task(tid, level, eet_ms, wcet_ms, period_ms, buf=16384, offset_ms=0, name=""):
    return TaskDef(tid, level, ms_to_cycles(eet_ms), ms_to_cycles(wcet_ms), ms_to_cycles(period_ms),
                   ms_to_cycles(period_ms), buf, buf, name, ms_to_cycles(offset_ms))


def pf(tid, offset_ms=0):
    return task(tid, HIGH, 15, 25, 45, 16384, offset_ms, f"PF{tid}")


def fft(tid):
    return task(tid, LOW, 0.1, 0.1, 0.15, 2048, 0, f"FFT{tid}")


def scenario(tasks, models=None, tiles=None, horizon_ms=45, o_switch_ms=0.02, n_param=1,
             static=None, timing=None, **kw):
    models = dict(models or {})
    for t in tasks:
        models.setdefault(t.id, ExecTimeModel.constant(t.t_eet))
    timing = timing or TimingParams.defaults()
    if o_switch_ms is not None:
        timing = TimingParams(timing.t_loop_wc, timing.t_str, timing.t_start_wc, timing.copy_model,
                              ms_to_cycles(o_switch_ms), timing.clock_hz, timing.loop_model)
    return Scenario(tuple(tasks), models, tuple(tiles or pool3()), timing,
                    ms_to_cycles(horizon_ms), n_param=n_param,
                    static_assignment=StaticAssignment(static) if static else None, **kw)
