"""Deterministic discrete-event core for the dynamic dispatching system."""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .channels import (ChannelClass, ChannelFull, MemoryBank, Message, MsgType,
                       NotificationChannel, QueueFull, StreamMerger, TaskQueue)
from .dispatcher import Anomaly, Dispatch, Dispatcher, ModeChange, PRIORITIES
from .model import Criticality, Job, JobState, TaskDef, Tile
from .trace import EventTrace, Rec

MASK64 = (1 << 64) - 1
DISPATCHER_ROUTE = 0


class ConfigInvalid(Exception):
    pass


class TileBusy(RuntimeError):
    pass


class EventKind(IntEnum):
    """Calendar order for simultaneous events (lower pops first)."""

    JOB_COMPLETE = 0
    JOB_START = 1
    MSG_DELIVERY = 2
    COPY_DONE = 3
    JOB_ARRIVAL = 4
    DISPATCHER_WAKE = 5
    SIM_END = 6


@dataclass(frozen=True)
class ExecTimeModel:
    """Per-job actual execution time, in cycles.

    constant: always ``value``. bimodal: with probability ``p_exceed`` uniform
    over ``high_range``, otherwise uniform over ``low_range`` (both inclusive).
    empirical: replays ``samples`` in order, wrapping around.
    """

    kind: str = "constant"
    value: int = 0
    p_exceed: float = 0.0
    low_range: tuple = (0, 0)
    high_range: tuple = (0, 0)
    samples: tuple = ()

    @classmethod
    def constant(cls, value: int) -> "ExecTimeModel":
        return cls("constant", value=value)

    @classmethod
    def bimodal(cls, p_exceed: float, low_range, high_range) -> "ExecTimeModel":
        return cls("bimodal", p_exceed=p_exceed, low_range=tuple(low_range), high_range=tuple(high_range))

    @classmethod
    def empirical(cls, samples) -> "ExecTimeModel":
        return cls("empirical", samples=tuple(int(s) for s in samples))

    def sample(self, rng: np.random.Generator, index: int = 0) -> int:
        if self.kind == "constant":
            return self.value
        if self.kind == "bimodal":
            lo, hi = self.high_range if rng.random() < self.p_exceed else self.low_range
            return int(rng.integers(lo, hi, endpoint=True))
        if self.kind == "empirical":
            return self.samples[index % len(self.samples)]
        raise ValueError(f"unknown execution-time model {self.kind!r}")

    def bounds(self) -> tuple[int, int]:
        if self.kind == "constant":
            return self.value, self.value
        if self.kind == "bimodal":
            lo = self.high_range[0] if self.p_exceed >= 1 else self.low_range[0]
            hi = self.low_range[1] if self.p_exceed <= 0 else self.high_range[1]
            return lo, hi
        return min(self.samples), max(self.samples)

    def violations(self, task: TaskDef) -> list[str]:
        who = f"task {task.label}"
        out = []
        if self.kind not in ("constant", "bimodal", "empirical"):
            return [f"{who}: unknown exec model kind {self.kind!r}"]
        if self.kind == "empirical" and not self.samples:
            return [f"{who}: empirical exec model without samples"]
        if self.kind == "bimodal":
            if not 0.0 <= self.p_exceed <= 1.0:
                out.append(f"{who}: p_exceed outside [0, 1]")
            (a, b), (c, d) = self.low_range, self.high_range
            if not 0 < a <= b <= task.t_eet:
                out.append(f"{who}: low_range must lie in (0, t_eet]")
            if self.p_exceed > 0 and not task.t_eet < c <= d <= task.t_wcet:
                out.append(f"{who}: high_range must lie in (t_eet, t_wcet]")
        lo, hi = self.bounds()
        if lo <= 0:
            out.append(f"{who}: execution times must be positive")
        if hi > task.t_wcet:
            out.append(f"{who}: sampled execution time can exceed t_wcet")
        return out


def stable_hash(key) -> int:
    return int.from_bytes(hashlib.blake2b(str(key).encode(), digest_size=8).digest(), "little")


def stream_rng(master_seed: int, key) -> np.random.Generator:
    """PCG64 stream for one consumer: seed = master_seed XOR blake2b-64(key)."""
    return np.random.Generator(np.random.PCG64((int(master_seed) ^ stable_hash(key)) & MASK64))


def source_rng(master_seed: int, task_id: int) -> np.random.Generator:
    return stream_rng(master_seed, f"task:{task_id}")


def sample_exec_time(model: ExecTimeModel, rng: np.random.Generator, index: int = 0) -> int:
    return model.sample(rng, index)


class JobSource:
    """Strictly periodic releases of one task with seeded execution times."""

    def __init__(self, task: TaskDef, model: ExecTimeModel, seed: int):
        self.task = task
        self.model = model
        self.rng = source_rng(seed, task.id)
        self.seq = 0

    def next_arrival(self) -> int:
        return self.task.arrival(self.seq)

    def release(self) -> Job:
        job = Job.release(self.task, self.seq, self.model.sample(self.rng, self.seq))
        self.seq += 1
        return job


def job_arrivals(task: TaskDef, horizon: int) -> int:
    """Number of releases in [0, horizon)."""
    if horizon <= task.offset:
        return 0
    return -(-(horizon - task.offset) // task.period)


def execute_job(tile: Tile, job: Job, start: int) -> int:
    """Occupy ``tile`` with ``job``; returns the completion time."""
    if tile.current_job is not None:
        raise TileBusy(f"tile {tile.id} busy with {tile.current_job} when starting {job}")
    tile.current_job = job
    tile.busy_until = start + job.actual_exec
    job.tile = tile.id
    job.start = start
    job.advance(JobState.RUNNING)
    return tile.busy_until


def _scenario_meta(scenario, seed: int, kind: str) -> dict:
    return {
        "kind": kind,
        "seed": int(seed),
        "horizon": scenario.horizon,
        "clock_hz": scenario.timing.clock_hz,
        "tiles": [t.id for t in scenario.tiles],
        "tasks": {t.id: {"name": t.label, "criticality": t.criticality.label(),
                         "t_eet": t.t_eet, "t_wcet": t.t_wcet, "period": t.period,
                         "input_buffer_bytes": t.input_buffer_bytes}
                  for t in scenario.tasks},
        "o_switch": scenario.o_switch,
    }


class Simulation:
    """One dynamic-dispatch run. ``fast_forward`` skips provably empty
    dispatcher iterations; it never changes the resulting trace."""

    def __init__(self, scenario, seed: int = 0, fast_forward: bool = True):
        problems = scenario.violations()
        if problems:
            raise ConfigInvalid("; ".join(problems))
        self.scenario = scenario
        self.seed = seed
        self.fast_forward = fast_forward
        self.horizon = scenario.horizon
        params = scenario.timing
        self.params = params
        self.tasks = {t.id: t for t in scenario.tasks}
        self.tiles = {t.id: t.fresh() for t in scenario.tiles}
        self.placement = scenario.bank_placement()
        self.banks = {(tid, b): MemoryBank((tid, b))
                      for tid in self.tiles for b in range(scenario.banks_per_tile)}
        promote = params.copy_model(scenario.metadata_bytes)
        self.queues = {p: TaskQueue(p, scenario.queue_capacity, promote) for p in PRIORITIES}
        self.channels = {p: NotificationChannel(ChannelClass.for_level(p), scenario.hop_latency,
                                                scenario.channel_capacity) for p in PRIORITIES}
        self.control = NotificationChannel(ChannelClass.CONTROL, scenario.hop_latency,
                                           scenario.channel_capacity)
        self.mergers = {p: StreamMerger() for p in PRIORITIES}
        self.sources = {t.id: JobSource(t, scenario.exec_models[t.id], seed) for t in scenario.tasks}
        self.dispatcher = Dispatcher(self.tasks, list(self.tiles.values()), self.queues, self.channels,
                                     params, scenario.o_switch, scenario.n_param, self.banks,
                                     self.placement, rng=stream_rng(seed, "dispatcher"))
        self._ms = self.dispatcher.state.mode
        self.trace = EventTrace(_scenario_meta(scenario, seed, "dynamic"))
        self.jobs: list[Job] = []
        self.empty_iterations = 0
        self._calendar: list = []
        self._seq = 0
        self._wake_gen = 0
        self._wake_at: Optional[int] = None
        self._wake_skips = 0
        self._grid = 0

    # calendar -------------------------------------------------------------
    def _schedule(self, time: int, kind: EventKind, payload=None):
        self._seq += 1
        heapq.heappush(self._calendar, (time, int(kind), self._seq, payload))

    def _hop(self, tile_id: int) -> int:
        return self.scenario.hop_latency * self.tiles[tile_id].distance

    # dispatcher wake management ------------------------------------------
    def _set_wake(self, time: int, skips: int):
        self._wake_gen += 1
        self._wake_at = time
        self._wake_skips = skips
        self._schedule(time, EventKind.DISPATCHER_WAKE, self._wake_gen)

    def _poke(self, when: int):
        """Something the dispatcher could act on becomes visible at ``when``."""
        if not self.fast_forward:
            return
        if self._wake_at is not None and self._wake_at <= when:
            return
        wake, skips = self.dispatcher.clock.first_wake_at_or_after(self._grid, when)
        if self._wake_at is None or wake < self._wake_at:
            self._set_wake(wake, skips)

    # handlers ---------------------------------------------------------------
    def _send_to_dispatcher(self, job: Job, mtype: MsgType, now: int, hop: int):
        channel = self.channels[job.criticality]
        msg = Message(DISPATCHER_ROUTE, mtype, job.task_id, job)
        try:
            delivery = channel.send(msg, now, hop)
        except ChannelFull:
            self.trace.add(now, Rec.ANOMALY, job.task_id, job.seq, aux=int(mtype))
            return
        self.trace.add(now, Rec.MSG_SEND, job.task_id, job.seq, job.tile if job.tile is not None else -1,
                       self._ms.mode, delivery, int(mtype) * 4 + int(channel.channel_class))
        self._poke(delivery)

    def _send_control(self, tile_id: int, mtype: MsgType, now: int, job: Optional[Job] = None):
        task_id = job.task_id if job is not None else 0
        msg = Message(tile_id & 0x1F, mtype, task_id, job)
        try:
            delivery = self.control.send(msg, now, self._hop(tile_id))
        except ChannelFull:
            self.trace.add(now, Rec.ANOMALY, task_id, job.seq if job else -1, tile_id, aux=int(mtype))
            return
        self.trace.add(now, Rec.MSG_SEND, task_id, job.seq if job else -1, tile_id,
                       self._ms.mode, delivery, int(mtype) * 4 + int(ChannelClass.CONTROL))
        self._schedule(delivery, EventKind.MSG_DELIVERY, tile_id)

    def _arrivals(self, now: int, task_ids: Sequence[int]):
        for prio in PRIORITIES:
            group = [tid for tid in task_ids if self.tasks[tid].criticality is prio]
            if not group:
                continue
            for tid in self.mergers[prio].order(group):
                source = self.sources[tid]
                job = source.release()
                self.jobs.append(job)
                self.trace.add(now, Rec.ARRIVAL, tid, job.seq, -1, self._ms.mode,
                               job.actual_exec, job.absolute_deadline)
                try:
                    promoted = self.queues[prio].enqueue(job, now)
                except QueueFull:
                    job.advance(JobState.DROPPED)
                    self.trace.add(now, Rec.DROP, tid, job.seq, -1, self._ms.mode)
                else:
                    if promoted is not None:
                        self._poke(promoted)
                    self._send_to_dispatcher(job, MsgType.TASK_ARRIVAL, now, self.scenario.hop_latency)
                nxt = source.next_arrival()
                if nxt < self.horizon:
                    self._schedule(nxt, EventKind.JOB_ARRIVAL, tid)

    def _wake(self, now: int, gen: int):
        if gen != self._wake_gen:
            return
        disp = self.dispatcher
        clock = disp.clock
        clock.consume(self._wake_skips)
        self.empty_iterations += self._wake_skips
        self._wake_at = None
        self._wake_skips = 0
        result = disp.step(now)
        clock.consume(1)
        if result.flags:
            self.trace.add(now, Rec.LOOP, mode=self._ms.mode, value=result.duration, aux=result.flags)
        else:
            self.empty_iterations += 1
        for action in result.actions:
            if isinstance(action, Dispatch):
                job = action.job
                job.advance(JobState.DISPATCHED)
                job.tile = action.tile
                self.trace.add(now, Rec.DISPATCH, job.task_id, job.seq, action.tile, action.mode,
                               action.copy_start, action.copy_end)
                job.advance(JobState.COPYING_IN)
                self._schedule(action.copy_end, EventKind.COPY_DONE, action)
            elif isinstance(action, ModeChange):
                self.trace.add(now, Rec.MODE, mode=int(action.mode),
                               value=disp.state.mode.high_mode_jobs_remaining)
                for tile_id in self.tiles:
                    self._send_control(tile_id, MsgType.MODE_NOTICE, now)
            elif isinstance(action, Anomaly):
                self.trace.add(now, Rec.ANOMALY, action.task_id, action.seq)
        self._grid = now + result.duration
        if not self.fast_forward:
            self._set_wake(self._grid, 0)
            return
        target = disp.next_interesting(now)
        if target is not None:
            wake, skips = clock.first_wake_at_or_after(self._grid, target)
            self._set_wake(wake, skips)

    def _copy_done(self, now: int, action: Dispatch):
        job = action.job
        nbytes = self.tasks[job.task_id].input_buffer_bytes
        self.trace.add(now, Rec.COPY_DONE, job.task_id, job.seq, action.tile, self._ms.mode,
                       action.copy_end - action.copy_start, nbytes)
        self._send_control(action.tile, MsgType.TASK_START, now, job)

    def _delivery(self, now: int, tile_id: int):
        msg = self.control.pop_ready(now)
        if msg is None:
            raise RuntimeError(f"control delivery at {now} with empty channel")
        job = msg.job
        self.trace.add(now, Rec.MSG_RECV, msg.task_id, job.seq if job else -1, tile_id,
                       self._ms.mode, now, int(msg.msg_type))
        if msg.msg_type is MsgType.TASK_START:
            self._schedule(now + self.params.start_cycles, EventKind.JOB_START, (tile_id, job))

    def _start(self, now: int, payload):
        tile_id, job = payload
        tile = self.tiles[tile_id]
        done = execute_job(tile, job, now)
        bank = self.banks[(tile_id, self.placement.get(job.task_id, 0))]
        bank.acquire(tile_id + 1, job.actual_exec, now)
        self.trace.add(now, Rec.START, job.task_id, job.seq, tile_id, self._ms.mode,
                       job.actual_exec)
        self._schedule(done, EventKind.JOB_COMPLETE, tile_id)

    def _complete(self, now: int, tile_id: int):
        tile = self.tiles[tile_id]
        job = tile.current_job
        tile.current_job = None
        tile.busy_until = None
        job.completion = now
        job.advance(JobState.COMPLETED)
        self.trace.add(now, Rec.COMPLETE, job.task_id, job.seq, tile_id, self._ms.mode,
                       job.absolute_deadline, job.actual_exec)
        self._send_to_dispatcher(job, MsgType.TASK_COMPLETE, now, self._hop(tile_id))

    # main loop --------------------------------------------------------------
    def run(self) -> EventTrace:
        cal = self._calendar
        for task in sorted(self.tasks.values(), key=lambda t: t.id):
            if task.offset < self.horizon:
                self._schedule(task.offset, EventKind.JOB_ARRIVAL, task.id)
        self._set_wake(0, 0)
        self._schedule(self.horizon, EventKind.SIM_END)
        pop = heapq.heappop
        arrival = int(EventKind.JOB_ARRIVAL)
        handlers = {int(EventKind.DISPATCHER_WAKE): self._wake,
                    int(EventKind.JOB_COMPLETE): self._complete,
                    int(EventKind.MSG_DELIVERY): self._delivery,
                    int(EventKind.COPY_DONE): self._copy_done,
                    int(EventKind.JOB_START): self._start}
        end = int(EventKind.SIM_END)
        while cal:
            time, kind, _, payload = pop(cal)
            if kind == arrival:
                batch = [payload]
                while cal and cal[0][0] == time and cal[0][1] == arrival:
                    batch.append(pop(cal)[3])
                self._arrivals(time, batch)
            elif kind == end:
                self.trace.add(time, Rec.SIM_END, -1, -1, -1, self._ms.mode)
                break
            else:
                handlers[kind](time, payload)
        self.trace.meta["empty_iterations"] = self.empty_iterations
        self.trace.meta["queues"] = {p.label(): {"offered": q.offered, "popped": q.popped,
                                                 "dropped": q.dropped, "still_queued": q.still_queued}
                                     for p, q in self.queues.items()}
        return self.trace


def run(scenario, seed: int = 0, fast_forward: bool = True) -> EventTrace:
    return Simulation(scenario, seed, fast_forward).run()


def derive_seeds(master_seed: int, n: int) -> list[int]:
    """Per-run seeds for a sweep, a pure function of the master seed."""
    if n <= 0:
        return []
    state = np.random.SeedSequence(int(master_seed)).generate_state(n, np.uint64)
    return [int(s) for s in state]
