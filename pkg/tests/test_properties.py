"""Trace invariants on randomized small scenarios."""

from collections import defaultdict

import pytest
from hypothesis import HealthCheck, assume, event, given, settings, strategies as st

from mcsdispatch import analysis
from mcsdispatch.baseline import run_static
from mcsdispatch.channels import ChannelClass, MsgType
from mcsdispatch.dispatcher import PRIORITIES
from mcsdispatch.engine import ExecTimeModel, Simulation
from mcsdispatch.model import Criticality, TaskDef, Tile
from mcsdispatch.scenario import Scenario, StaticAssignment
from mcsdispatch.timing import TimingParams
from mcsdispatch.trace import Rec

from helpers import HIGH, LOW, pf, pool3, scenario

POOLS = {
    "pool3": pool3(),
    "pool4": pool3() + (Tile(4, {LOW}, {LOW}),),
    "pool2": (Tile(1, {HIGH}, {HIGH}), Tile(2, {LOW}, {HIGH})),
    "wide": (Tile(1, {HIGH}, {HIGH}), Tile(2, {HIGH}, {HIGH}), Tile(3, {LOW}, {HIGH}), Tile(4, {LOW}, {LOW})),
}
BUFFERS = [64, 256, 2048, 16384]
CASES = 1000


@st.composite
def exec_model(draw, eet, wcet):
    kind = draw(st.sampled_from(["eet", "wcet", "bimodal"] if eet < wcet else ["eet"]))
    if kind == "eet":
        return ExecTimeModel.constant(eet)
    if kind == "wcet":
        return ExecTimeModel.constant(wcet)
    p = draw(st.sampled_from([0.0, 0.2, 0.5, 1.0]))
    lo = draw(st.integers(1, eet))
    hi = draw(st.integers(eet + 1, wcet))
    return ExecTimeModel.bimodal(p, (lo, eet), (hi, wcet))


@st.composite
def small_scenario(draw, conservative=False):
    tiles = POOLS[draw(st.sampled_from(sorted(POOLS)))]
    # contention: two synchronous high tasks whose first one runs long enough
    # to push the second past its switch time
    contended = draw(st.booleans())
    n_high = 2 if contended else draw(st.integers(1, 2))
    n_low = draw(st.integers(0, 3))
    tasks, models = [], {}
    high_period = draw(st.integers(200_000, 1_250_000))
    for i in range(n_high + n_low):
        tid = i + 1
        high = i < n_high
        if high:
            period = high_period if contended else draw(st.integers(200_000, 1_250_000))
            wcet = draw(st.integers(period * 11 // 20 if contended else period // 10, period * 4 // 5))
        else:
            period = draw(st.integers(50_000, 400_000))
            wcet = draw(st.integers(5_000, 40_000))
        eet = draw(st.integers(max(1, wcet // 3), wcet))
        buf = draw(st.sampled_from(BUFFERS))
        offset = draw(st.integers(0, period - 1)) if draw(st.booleans()) and not (contended and high) else 0
        t = TaskDef(tid, HIGH if high else LOW, eet, wcet, period, period, buf, buf, f"t{tid}", offset)
        tasks.append(t)
        models[tid] = draw(exec_model(eet, wcet))
    if contended:
        models[1] = ExecTimeModel.constant(tasks[0].t_wcet)
    o_switch = None if conservative else draw(st.sampled_from([None, 25_000, 12_000]))
    timing = TimingParams.defaults(o_switch_override=o_switch)
    sc = Scenario(tuple(tasks), models, tiles, timing,
                    horizon=high_period * draw(st.integers(0, 5)) + draw(st.integers(0, high_period)),
                    n_param=draw(st.integers(1, 3)),
                    # the deadline guarantee presumes no high job is ever dropped
                    queue_capacity=16 if conservative else draw(st.sampled_from([1, 2, 16])),
                    name="random")
    # e.g. o_switch beyond a high task's laxity
    assume(not sc.violations())
    return sc


class Recorder:
    """Wraps the dispatcher's completion handler to log the mode around each call."""

    def __init__(self, sim):
        self.calls = []
        disp = sim.dispatcher
        inner = disp.on_completion

        def wrapped(msg, now):
            before = disp.mode
            actions = inner(msg, now)
            job = msg.job
            exceeded = job.actual_exec > disp.tasks[job.task_id].t_eet
            self.calls.append((now, job.criticality, exceeded, before, disp.mode))
            return actions

        disp.on_completion = wrapped


def simulate(sc, seed=0):
    sim = Simulation(sc, seed)
    rec = Recorder(sim)
    return sim, sim.run(), rec


def by_job(trace):
    jobs = defaultdict(dict)
    for r in trace:
        if r.task >= 0 and r.seq >= 0:
            jobs[(r.task, r.seq)].setdefault(r.kind, []).append(r)
    return jobs


def check_dynamic(sc, sim, trace, rec):
    tiles = {t.id: t for t in sc.tiles}
    tasks = {t.id: t for t in sc.tasks}
    jobs = by_job(trace)
    spans = defaultdict(list)
    for key, recs in jobs.items():
        task = tasks[key[0]]
        arrival = recs[Rec.ARRIVAL][0]
        assert len(recs.get(Rec.DISPATCH, [])) <= 1 and len(recs.get(Rec.START, [])) <= 1
        # notification follows the (already staged) payload
        for send in recs.get(Rec.MSG_SEND, []):
            assert send.time >= arrival.time and send.value > send.time
        if Rec.DISPATCH not in recs:
            assert Rec.START not in recs
            continue
        d = recs[Rec.DISPATCH][0]
        # capability safety at the dispatch instant
        assert tiles[d.tile].capable(task.criticality, Criticality(d.mode))
        assert d.time >= arrival.time and d.value >= d.time and d.aux > d.value
        end = sc.horizon
        if Rec.START in recs:
            s = recs[Rec.START][0]
            copy_done = recs[Rec.COPY_DONE][0]
            assert copy_done.time == d.aux
            start_msgs = [m for m in recs[Rec.MSG_SEND] if m.aux >> 2 == MsgType.TASK_START]
            assert len(start_msgs) == 1 and start_msgs[0].time == copy_done.time
            assert s.time >= start_msgs[0].value
            assert s.tile == d.tile
            if Rec.COMPLETE in recs:
                c = recs[Rec.COMPLETE][0]
                # non-preemptive, exact execution time
                assert c.time - s.time == s.value == arrival.value
                end = c.time
        spans[d.tile].append((d.value, end))
    # tile mutual exclusion over [copy start, completion)
    for tile, iv in spans.items():
        iv.sort()
        for (a0, a1), (b0, b1) in zip(iv, iv[1:]):
            assert a1 <= b0, f"tile {tile}: {a0}-{a1} overlaps {b0}-{b1}"
    # queue conservation
    for prio in PRIORITIES:
        q = sim.queues[prio]
        assert q.offered == q.popped + q.dropped + q.still_queued
    levels = {t.id: t.criticality for t in sc.tasks}
    arrivals = trace.of_kind(Rec.ARRIVAL)["task"].tolist()
    for prio in PRIORITIES:
        assert sim.queues[prio].offered == sum(levels[t] is prio for t in arrivals)
    assert trace.count(Rec.DROP) == sum(sim.queues[p].dropped for p in PRIORITIES)
    # bank exclusivity
    for bank in sim.banks.values():
        hist = sorted((a, b) for _, a, b in bank.history if b > a)
        for (a0, a1), (b0, b1) in zip(hist, hist[1:]):
            assert a1 <= b0
    # partition exactness
    usage = analysis.tile_usage(trace)
    for u in usage.tiles.values():
        assert u.busy + u.overhead + u.idle == sc.horizon
        assert min(u.busy, u.overhead, u.idle) >= 0
    # channel framing: every send is a two-packet message on a known class
    for r in records(trace, Rec.MSG_SEND):
        assert r.aux & 3 in tuple(ChannelClass)
    check_countdown(sc, trace, rec)


def records(trace, kind):
    return [r for r in trace if r.kind is kind]


def check_countdown(sc, trace, rec):
    """Replays the n-countdown over the completions the dispatcher processed."""
    n = sc.n_param
    count = None
    returns = 0
    for now, level, exceeded, before, after in rec.calls:
        if before is LOW:
            assert after is LOW
            count = None
            continue
        if level is LOW:
            assert after is HIGH
            continue
        if count is None:
            count = n
        count = n if exceeded else count - 1
        if count == 0:
            assert after is LOW
            returns += 1
            count = None
        else:
            assert after is HIGH
    modes = [r.mode for r in records(trace, Rec.MODE)]
    assert modes.count(int(LOW)) == returns
    # modes alternate, starting with a switch to High
    assert all(m == (int(HIGH) if i % 2 == 0 else int(LOW)) for i, m in enumerate(modes))


@settings(max_examples=CASES, suppress_health_check=[HealthCheck.too_slow])
@given(small_scenario(), st.integers(0, 2**64 - 1))
def test_dynamic_trace_invariants(sc, seed):
    sim, trace, rec = simulate(sc, seed)
    event(f"mode switches: {min(trace.count(Rec.MODE), 2)}+")
    event(f"drops: {trace.count(Rec.DROP) > 0}")
    check_dynamic(sc, sim, trace, rec)


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(small_scenario(), st.integers(0, 2**32 - 1))
def test_determinism_and_fast_forward(sc, seed):
    a = Simulation(sc, seed).run()
    assert a == Simulation(sc, seed).run()
    assert a == Simulation(sc, seed, fast_forward=False).run()


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(small_scenario(conservative=True), st.integers(0, 2**32 - 1))
def test_no_high_misses_with_conservative_switch_overhead(sc, seed):
    highs = [t for t in sc.tasks if t.is_high]
    high_tiles = [t for t in sc.tiles if t.capable(HIGH, HIGH)]
    # feasible: every high task can own a tile in High mode
    if len(highs) > len(high_tiles):
        return
    trace = Simulation(sc, seed).run()
    assert analysis.high_deadline_misses(trace) == 0


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(small_scenario(), st.integers(0, 2**32 - 1))
def test_static_pairing(sc, seed):
    highs = [t.id for t in sc.tasks if t.is_high]
    lows = [t.id for t in sc.tasks if not t.is_high]
    high_tiles = [t.id for t in sc.tiles if HIGH in t.allowed_low_mode]
    low_tiles = [t.id for t in sc.tiles if LOW in t.allowed_low_mode] or [t.id for t in sc.tiles
                                                                         if t.ever_capable(LOW)]
    mapping = {tid: high_tiles[i % len(high_tiles)] for i, tid in enumerate(highs)}
    mapping.update({tid: low_tiles[i % len(low_tiles)] for i, tid in enumerate(lows)})
    sc = sc.replace(static_assignment=StaticAssignment(mapping))
    from mcsdispatch.baseline import assignment_violations
    if assignment_violations(sc, sc.static_assignment):
        return
    st_trace = run_static(sc, seed=seed)
    dyn = Simulation(sc, seed).run()
    for r in records(st_trace, Rec.DISPATCH):
        assert r.tile == mapping[r.task]
    exec_of = lambda t: {(r.task, r.seq): r.value for r in records(t, Rec.ARRIVAL)}
    assert exec_of(st_trace) == exec_of(dyn)
    # utilization <= 1 alone does not make non-preemptive FIFO safe; zero misses
    # needs each high task alone on its tile with copy + WCET within the deadline
    copy = sc.timing.copy_model
    hosts = [mapping[t] for t in highs]
    if len(set(hosts)) == len(hosts) and all(
            t.t_wcet + copy(t.input_buffer_bytes) <= t.deadline for t in sc.tasks if t.is_high):
        assert analysis.high_deadline_misses(st_trace) == 0
    u = analysis.tile_usage(st_trace)
    assert all(x.busy + x.overhead + x.idle == sc.horizon for x in u.tiles.values())
    rep = analysis.compare(dyn, st_trace)
    back = analysis.compare(st_trace, dyn)
    if rep.idle_static and rep.idle_dynamic:
        assert (rep.idle_reduction_pct > 0) == (back.idle_reduction_pct < 0) or rep.idle_reduction_pct == 0
    for q in analysis.QUANTITIES[:2]:
        h = analysis.histogram(dyn, q, bins=7)
        kind = Rec.LOOP if q == "loop_time" else Rec.START
        assert h.total == dyn.count(kind)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_mode_returns_after_exactly_n_within_eet_completions(n):
    # PF1's first job overruns and holds tile 1 past PF2's switch time, so PF2#0
    # is started on tile 2 in High mode. Every later job stays within t_eet.
    t1, t2 = pf(1), pf(2)
    models = {1: ExecTimeModel.empirical([t1.t_wcet] + [t1.t_eet] * 20),
              2: ExecTimeModel.constant(t2.t_eet)}
    sc = scenario([t1, t2], models=models, horizon_ms=45 * 6, n_param=n)
    sim, trace, rec = simulate(sc)
    check_countdown(sc, trace, rec)
    modes = records(trace, Rec.MODE)
    assert [m.mode for m in modes] == [int(HIGH), int(LOW)]
    in_high = [c for c in rec.calls if c[3] is HIGH]
    # the overrun resets the countdown, then exactly n good completions follow
    assert [c[2] for c in in_high] == [True] + [False] * n
    assert in_high[-1][4] is LOW
    assert modes[1].time == in_high[-1][0]
