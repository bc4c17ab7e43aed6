"""Static-mapping reference: every task is pinned to one tile for the whole run.

Jobs of a tile run one after another in arrival order. Each job pays the
same input-buffer copy as in the dynamic system but none of the dispatcher's
loop, notification or start latencies, which makes the comparison
conservative for the dynamic design.
"""

from __future__ import annotations

import heapq
from collections import deque
from fractions import Fraction

from .channels import StreamMerger
from .engine import JobSource, _scenario_meta
from .model import Criticality
from .scenario import StaticAssignment
from .trace import EventTrace, Rec

# same-instant ordering, mirrors the dynamic engine's calendar
_ORDER = {Rec.COMPLETE: 0, Rec.START: 1, Rec.COPY_DONE: 3, Rec.ARRIVAL: 4, Rec.DROP: 4,
          Rec.DISPATCH: 5}


class AssignmentInfeasible(Exception):
    pass


def assignment_violations(scenario, assignment: StaticAssignment) -> list[str]:
    tiles = {t.id: t for t in scenario.tiles}
    mapping = assignment.map
    out = []
    for task in scenario.tasks:
        if task.id not in mapping:
            out.append(f"static_assignment: task {task.label} is not assigned to a tile")
            continue
        tile = tiles.get(mapping[task.id])
        if tile is None:
            out.append(f"static_assignment: task {task.label} mapped to unknown tile {mapping[task.id]}")
        elif not tile.ever_capable(task.criticality):
            out.append(f"static_assignment: tile {tile.id} never accepts {task.criticality.label()} "
                       f"task {task.label}")
    known = {t.id for t in scenario.tasks}
    for tid in sorted(set(mapping) - known):
        out.append(f"static_assignment: unknown task id {tid}")
    # WCET reservation only binds tiles that host high-criticality work;
    # a low-only tile is allowed to saturate (and drop) like the dynamic pool
    for tile_id in sorted(tiles):
        hosted = [t for t in scenario.tasks if mapping.get(t.id) == tile_id]
        if any(t.is_high for t in hosted):
            util = sum(Fraction(t.t_wcet, t.period) for t in hosted)
            if util > 1:
                out.append(f"static_assignment: tile {tile_id} WCET utilization {float(util):.3f} > 1 "
                           f"({', '.join(t.label for t in hosted)})")
    return out


def _releases(scenario, seed: int):
    """All releases in [0, horizon) as (time, job), same-time ties resolved
    round-robin per priority exactly like the dynamic engine."""
    sources = {t.id: JobSource(t, scenario.exec_models[t.id], seed) for t in scenario.tasks}
    crit = {t.id: t.criticality for t in scenario.tasks}
    mergers = {p: StreamMerger() for p in (Criticality.HIGH, Criticality.LOW)}
    heap = [(t.offset, t.id) for t in scenario.tasks if t.offset < scenario.horizon]
    heapq.heapify(heap)
    out = []
    while heap:
        now = heap[0][0]
        batch = []
        while heap and heap[0][0] == now:
            batch.append(heapq.heappop(heap)[1])
        for prio in (Criticality.HIGH, Criticality.LOW):
            group = [tid for tid in batch if crit[tid] is prio]
            for tid in mergers[prio].order(group) if group else ():
                src = sources[tid]
                out.append((now, src.release()))
                nxt = src.next_arrival()
                if nxt < scenario.horizon:
                    heapq.heappush(heap, (nxt, tid))
    return out


def _run_tile(tile_id, releases, copy_cycles, nbytes, capacity, horizon, rows):
    free = 0
    waiting: deque = deque()

    def start_ready(until):
        nonlocal free
        while waiting and max(free, waiting[0].arrival) <= until:
            job = waiting.popleft()
            c0 = max(free, job.arrival)
            c1 = c0 + copy_cycles[job.task_id]
            done = c1 + job.actual_exec
            free = done
            rows.append((c0, Rec.DISPATCH, job.task_id, job.seq, tile_id, c0, c1))
            if c1 <= horizon:
                rows.append((c1, Rec.COPY_DONE, job.task_id, job.seq, tile_id, c1 - c0,
                             nbytes[job.task_id]))
                rows.append((c1, Rec.START, job.task_id, job.seq, tile_id, job.actual_exec, 0))
            if done <= horizon:
                rows.append((done, Rec.COMPLETE, job.task_id, job.seq, tile_id,
                             job.absolute_deadline, job.actual_exec))

    for now, job in releases:
        # a tile that frees exactly now takes the queue head before the new arrival
        start_ready(now)
        rows.append((now, Rec.ARRIVAL, job.task_id, job.seq, -1, job.actual_exec, job.absolute_deadline))
        if len(waiting) >= capacity:
            rows.append((now, Rec.DROP, job.task_id, job.seq, -1, 0, 0))
            continue
        waiting.append(job)
        start_ready(now)
    start_ready(horizon)


def run_static(scenario, assignment: StaticAssignment | None = None, seed: int = 0) -> EventTrace:
    """Simulate the static mapping; the trace uses the dynamic engine's record kinds."""
    assignment = assignment if assignment is not None else scenario.static_assignment
    if assignment is None:
        raise AssignmentInfeasible("scenario declares no static_assignment")
    problems = assignment_violations(scenario, assignment)
    if problems:
        raise AssignmentInfeasible("; ".join(problems))

    horizon = scenario.horizon
    nbytes = {t.id: t.input_buffer_bytes for t in scenario.tasks}
    copy_cycles = {tid: scenario.timing.copy_model(b) for tid, b in nbytes.items()}
    per_tile: dict = {t.id: [] for t in scenario.tiles}
    for now, job in _releases(scenario, seed):
        per_tile[assignment.map[job.task_id]].append((now, job))

    rows: list = []
    for tile_id in sorted(per_tile):
        _run_tile(tile_id, per_tile[tile_id], copy_cycles, nbytes, scenario.queue_capacity, horizon, rows)
    rows.sort(key=lambda r: (r[0], _ORDER[r[1]], r[4], r[2], r[3]))

    meta = _scenario_meta(scenario, seed, "static")
    meta["assignment"] = {int(k): int(v) for k, v in sorted(assignment.map.items())}
    trace = EventTrace(meta)
    low = int(Criticality.LOW)
    for time, kind, task, seq, tile, value, aux in rows:
        trace.add(time, kind, task, seq, tile, low, value, aux)
    trace.add(horizon, Rec.SIM_END, -1, -1, -1, low)
    return trace
