"""Criticality-aware resource allocation loop.

Each iteration runs: (1) context-switch check, then for each priority level
(high first): (2) refresh the local task copy from the queue, (3) try to
dispatch it to an idle capable tile, (4) drain one notification.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

from .channels import Message, MemoryBank, MsgType, NotificationChannel, TaskQueue
from .model import Criticality, Job, JobState, SystemMode, TaskDef, Tile
from .timing import TimingParams, switch_time

log = logging.getLogger(__name__)

DISPATCHER_ENTITY = 0

# loop flag bits, one per (step, priority)
FLAG_SWITCH = 1 << 0
FLAG_FETCH = {Criticality.HIGH: 1 << 1, Criticality.LOW: 1 << 4}
FLAG_DISPATCH = {Criticality.HIGH: 1 << 2, Criticality.LOW: 1 << 5}
FLAG_DRAIN = {Criticality.HIGH: 1 << 3, Criticality.LOW: 1 << 6}
FLAG_DRAIN_ONLY = FLAG_DRAIN[Criticality.HIGH] | FLAG_DRAIN[Criticality.LOW]

PRIORITIES = (Criticality.HIGH, Criticality.LOW)


class UnknownJob(Exception):
    pass


class Dispatch(NamedTuple):
    job: Job
    tile: int
    copy_start: int
    copy_end: int
    mode: Criticality


class ModeChange(NamedTuple):
    mode: Criticality
    reason: str


class Anomaly(NamedTuple):
    what: str
    task_id: int
    seq: int


class StepResult(NamedTuple):
    actions: list
    duration: int
    flags: int


@dataclass
class DispatcherState:
    mode: SystemMode
    local_task_copy: dict = field(default_factory=lambda: {p: None for p in PRIORITIES})
    pending_switch_times: list = field(default_factory=list)
    tile_view: dict = field(default_factory=dict)
    loop_flags: int = 0
    notified: dict = field(default_factory=lambda: {p: 0 for p in PRIORITIES})


class LoopClock:
    """Iteration durations. Draws one uniform per iteration from the
    dispatcher's stream so that skipped empty iterations consume the same
    draws a literal busy loop would."""

    def __init__(self, params: TimingParams, rng=None):
        self.model = params.loop_model
        wc = params.loop_cycles
        m = self.model
        self.work_range = (m.low if m.low is not None else wc, m.high if m.high is not None else wc)
        self.empty_range = (m.empty_low if m.empty_low is not None else self.work_range[0],
                            m.empty_high if m.empty_high is not None else self.work_range[1])
        if not m.constant and rng is None:
            raise ValueError("stochastic loop model needs an rng")
        self.rng = rng
        self.constant = m.constant
        self.buffer: list[float] = []

    def _draw(self, i: int) -> float:
        while len(self.buffer) <= i:
            self.buffer.extend(self.rng.random(64).tolist())
        return self.buffer[i]

    @staticmethod
    def _map(u: float, lo: int, hi: int) -> int:
        return lo + min(int(u * (hi - lo + 1)), hi - lo)

    def work(self, i: int = 0) -> int:
        if self.constant:
            return self.work_range[1]
        return self._map(self._draw(i), *self.work_range)

    def empty(self, i: int = 0) -> int:
        if self.constant:
            return self.empty_range[1]
        return self._map(self._draw(i), *self.empty_range)

    def consume(self, n: int) -> None:
        if not self.constant:
            del self.buffer[:n]

    def first_wake_at_or_after(self, grid: int, target: int) -> tuple[int, int]:
        """First grid point >= target reached through empty iterations.

        Returns (wake time, number of empty iterations skipped).
        """
        if target <= grid:
            return grid, 0
        if self.constant:
            step = self.empty_range[1]
            k = -(-(target - grid) // step)
            return grid + k * step, k
        t, k = grid, 0
        while t < target:
            t += self.empty(k)
            k += 1
        return t, k


class Dispatcher:
    def __init__(self, tasks: Mapping[int, TaskDef], tiles: Sequence[Tile], queues, channels,
                 params: TimingParams, o_switch: int, n_param: int = 1,
                 banks: Optional[Mapping] = None, placement: Optional[Mapping[int, int]] = None,
                 rng=None):
        self.tasks = dict(tasks)
        self.tiles = sorted(tiles, key=lambda t: t.id)
        self.queues = queues
        self.channels = channels
        self.params = params
        self.o_switch = o_switch
        self.copy = params.copy_model
        self.lookahead = params.loop_cycles
        self.banks = banks if banks is not None else {}
        self.placement = placement if placement is not None else {}
        self.clock = LoopClock(params, rng)
        self.state = DispatcherState(SystemMode(n_param=n_param),
                                     tile_view={t.id: None for t in self.tiles})
        self.running: dict = {}
        # capable tile ids per (mode, level), ascending
        self._capable = {(m, lvl): [t.id for t in self.tiles if t.capable(lvl, m)]
                         for m in Criticality for lvl in Criticality}
        self._tile_by_id = {t.id: t for t in self.tiles}
        self._copy_cycles = {tid: self.copy(t.input_buffer_bytes) for tid, t in self.tasks.items()}

    @property
    def mode(self) -> Criticality:
        return self.state.mode.mode

    # step 1 ---------------------------------------------------------------
    def _purge_switch_times(self):
        pending = self.state.pending_switch_times
        while pending and pending[0][3].state is not JobState.QUEUED:
            heapq.heappop(pending)

    def check_context_switch(self, now: int) -> Optional[ModeChange]:
        """Enter High mode when the next iteration would come too late for the
        earliest undispatched high job's switch time."""
        if self.state.mode.mode is Criticality.HIGH:
            return None
        self._purge_switch_times()
        pending = self.state.pending_switch_times
        if pending and now + self.lookahead > pending[0][0]:
            _, tid, seq, _ = pending[0]
            self.state.mode.enter_high()
            return ModeChange(Criticality.HIGH, f"switch time of job {tid}#{seq}")
        return None

    # step 3 ---------------------------------------------------------------
    def try_dispatch(self, job: Job, now: int = 0) -> Optional[Tile]:
        view = self.state.tile_view
        for tid in self._capable[self.state.mode.mode, job.criticality]:
            if view[tid] is None:
                return self._tile_by_id[tid]
        return None

    def _copy_window(self, job: Job, tile: Tile, cursor: int) -> tuple[int, int]:
        duration = self._copy_cycles[job.task_id]
        bank = self.banks.get((tile.id, self.placement.get(job.task_id, 0)))
        start = cursor
        if bank is not None:
            grant = bank.acquire(DISPATCHER_ENTITY, duration, start)
            if not grant.granted:
                start = grant.until
                bank.acquire(DISPATCHER_ENTITY, duration, start)
        return start, start + duration

    # step 4 ---------------------------------------------------------------
    def on_arrival(self, job: Job) -> None:
        self.state.notified[job.criticality] += 1
        if job.criticality is Criticality.HIGH:
            point = switch_time(job.arrival, self.tasks[job.task_id], self.o_switch)
            heapq.heappush(self.state.pending_switch_times, (point.time, job.task_id, job.seq, job))

    def on_completion(self, msg: Message, now: int) -> list:
        job = msg.job
        if job is None or job.key not in self.running:
            log.warning("completion for unknown job (task %s)", msg.task_id)
            return [Anomaly("UnknownJob", msg.task_id, -1 if job is None else job.seq)]
        tile_id = self.running.pop(job.key)
        self.state.tile_view[tile_id] = None
        actions = []
        if job.criticality is Criticality.HIGH:
            exceeded = job.actual_exec > self.tasks[job.task_id].t_eet
            if self.state.mode.record_high_completion(exceeded):
                actions.append(ModeChange(Criticality.LOW, f"countdown elapsed at job {job.task_id}#{job.seq}"))
        return actions

    def _drain(self, prio: Criticality, now: int, actions: list) -> bool:
        msg = self.channels[prio].pop_ready(now)
        if msg is None:
            return False
        if msg.msg_type is MsgType.TASK_ARRIVAL:
            self.on_arrival(msg.job)
        elif msg.msg_type is MsgType.TASK_COMPLETE:
            actions.extend(self.on_completion(msg, now))
        else:
            actions.append(Anomaly(f"unexpected {msg.msg_type.name}", msg.task_id, -1))
        return True

    # loop -----------------------------------------------------------------
    def step(self, now: int, draw: int = 0) -> StepResult:
        st = self.state
        actions: list = []
        flags = 0
        cursor = now
        change = self.check_context_switch(now)
        if change is not None:
            actions.append(change)
            flags |= FLAG_SWITCH
        for prio in PRIORITIES:
            if st.local_task_copy[prio] is None and st.notified[prio] > 0:
                job = self.queues[prio].pop_front(now)
                if job is not None:
                    st.local_task_copy[prio] = job
                    st.notified[prio] -= 1
                    flags |= FLAG_FETCH[prio]
            job = st.local_task_copy[prio]
            if job is not None:
                tile = self.try_dispatch(job, now)
                if tile is not None:
                    copy_start, copy_end = self._copy_window(job, tile, cursor)
                    cursor = copy_end
                    st.tile_view[tile.id] = job
                    self.running[job.key] = tile.id
                    st.local_task_copy[prio] = None
                    actions.append(Dispatch(job, tile.id, copy_start, copy_end, st.mode.mode))
                    flags |= FLAG_DISPATCH[prio]
            if self._drain(prio, now, actions):
                flags |= FLAG_DRAIN[prio]
        st.loop_flags = flags
        base = self.clock.work(draw) if flags else self.clock.empty(draw)
        return StepResult(actions, max(base, cursor - now), flags)

    def next_interesting(self, now: int) -> Optional[int]:
        """Earliest time at which an iteration could do work, given no new input."""
        st = self.state
        mode = st.mode.mode
        view = st.tile_view
        for prio in PRIORITIES:
            if st.local_task_copy[prio] is not None:
                for tid in self._capable[mode, prio]:
                    if view[tid] is None:
                        return now
        candidates = []
        for prio in PRIORITIES:
            nd = self.channels[prio].next_delivery()
            if nd is not None:
                candidates.append(nd)
            q = self.queues[prio]
            if st.local_task_copy[prio] is None and st.notified[prio] > 0 and q.front_buffer is not None:
                candidates.append(q.front_ready_at)
        if mode is Criticality.LOW:
            self._purge_switch_times()
            if st.pending_switch_times:
                candidates.append(st.pending_switch_times[0][0] - self.lookahead + 1)
        return min(candidates) if candidates else None


def step(dispatcher: Dispatcher, now: int) -> StepResult:
    return dispatcher.step(now)


def check_context_switch(dispatcher: Dispatcher, now: int) -> Optional[ModeChange]:
    return dispatcher.check_context_switch(now)


def try_dispatch(dispatcher: Dispatcher, job: Job, now: int = 0) -> Optional[Tile]:
    return dispatcher.try_dispatch(job, now)


def on_completion(dispatcher: Dispatcher, msg: Message, now: int) -> list:
    return dispatcher.on_completion(msg, now)
