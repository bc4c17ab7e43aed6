"""Domain types: criticality levels, periodic tasks, jobs, compute tiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional


class Criticality(IntEnum):
    LOW = 0
    HIGH = 1

    @classmethod
    def parse(cls, value) -> "Criticality":
        if isinstance(value, Criticality):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown criticality {value!r} (expected 'low' or 'high')") from None

    def label(self) -> str:
        return self.name.lower()


class JobState(IntEnum):
    QUEUED = 0
    DISPATCHED = 1
    COPYING_IN = 2
    RUNNING = 3
    COMPLETED = 4
    DROPPED = 5


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TaskDef:
    """A periodic task with implicit deadline. All durations are in cycles."""

    id: int
    criticality: Criticality
    t_eet: int
    t_wcet: int
    period: int
    deadline: int
    input_buffer_bytes: int
    output_buffer_bytes: int
    name: str = ""
    offset: int = 0

    @property
    def label(self) -> str:
        return self.name or f"task{self.id}"

    @property
    def is_high(self) -> bool:
        return self.criticality is Criticality.HIGH

    @property
    def max_buffer_bytes(self) -> int:
        return max(self.input_buffer_bytes, self.output_buffer_bytes)

    @property
    def utilization(self) -> float:
        return self.t_wcet / self.period

    def arrival(self, seq: int) -> int:
        return self.offset + seq * self.period

    def violations(self) -> list[str]:
        out = []
        who = f"task {self.label}"
        if self.t_eet <= 0:
            out.append(f"{who}: t_eet must be > 0")
        if self.t_eet > self.t_wcet:
            out.append(f"{who}: t_eet > t_wcet")
        if self.deadline != self.period:
            out.append(f"{who}: deadline != period (implicit deadlines required)")
        if self.t_wcet > self.deadline:
            out.append(f"{who}: t_wcet > deadline, unschedulable in isolation")
        for attr in ("input_buffer_bytes", "output_buffer_bytes"):
            if not is_power_of_two(getattr(self, attr)):
                out.append(f"{who}: {attr}={getattr(self, attr)} is not a power of two")
        if self.offset < 0:
            out.append(f"{who}: negative release offset")
        return out


_FORWARD = {
    JobState.QUEUED: {JobState.DISPATCHED, JobState.DROPPED},
    JobState.DISPATCHED: {JobState.COPYING_IN},
    JobState.COPYING_IN: {JobState.RUNNING},
    JobState.RUNNING: {JobState.COMPLETED},
    JobState.COMPLETED: set(),
    JobState.DROPPED: set(),
}


@dataclass(eq=False)
class Job:
    task_id: int
    seq: int
    arrival: int
    actual_exec: int
    absolute_deadline: int
    criticality: Criticality = Criticality.LOW
    state: JobState = JobState.QUEUED
    tile: Optional[int] = None
    start: Optional[int] = None
    completion: Optional[int] = None

    @classmethod
    def release(cls, task: TaskDef, seq: int, actual_exec: int) -> "Job":
        arrival = task.arrival(seq)
        return cls(task.id, seq, arrival, actual_exec, arrival + task.deadline, task.criticality)

    @property
    def key(self) -> tuple[int, int]:
        return (self.task_id, self.seq)

    @property
    def missed(self) -> bool:
        return self.completion is not None and self.completion > self.absolute_deadline

    def advance(self, state: JobState) -> None:
        if state not in _FORWARD[self.state]:
            raise RuntimeError(f"job {self.key}: illegal transition {self.state.name} -> {state.name}")
        self.state = state

    def __repr__(self) -> str:
        return f"Job({self.task_id}#{self.seq} @{self.arrival} {self.state.name})"


@dataclass
class Tile:
    """A non-preemptive compute tile.

    ``allowed_low_mode`` / ``allowed_high_mode`` list the criticality levels the
    tile may execute while the system is in that mode.
    """

    id: int
    allowed_low_mode: frozenset = field(default_factory=frozenset)
    allowed_high_mode: frozenset = field(default_factory=frozenset)
    distance: int = 1
    current_job: Optional[Job] = None
    busy_until: Optional[int] = None

    def __post_init__(self):
        self.allowed_low_mode = frozenset(Criticality.parse(c) for c in self.allowed_low_mode)
        self.allowed_high_mode = frozenset(Criticality.parse(c) for c in self.allowed_high_mode)

    def allowed(self, mode: Criticality) -> frozenset:
        return self.allowed_high_mode if mode is Criticality.HIGH else self.allowed_low_mode

    def capable(self, level: Criticality, mode: Criticality) -> bool:
        return level in self.allowed(mode)

    def ever_capable(self, level: Criticality) -> bool:
        return level in self.allowed_low_mode or level in self.allowed_high_mode

    @property
    def idle(self) -> bool:
        return self.current_job is None

    def fresh(self) -> "Tile":
        """Copy with capabilities only (no runtime state)."""
        return Tile(self.id, self.allowed_low_mode, self.allowed_high_mode, self.distance)


@dataclass
class SystemMode:
    mode: Criticality = Criticality.LOW
    n_param: int = 1
    high_mode_jobs_remaining: int = 0

    def __post_init__(self):
        if self.n_param < 1:
            raise ValueError("n_param must be a positive integer")

    def enter_high(self) -> None:
        self.mode = Criticality.HIGH
        self.high_mode_jobs_remaining = self.n_param

    def record_high_completion(self, exceeded: bool) -> bool:
        """Feed the return-to-low countdown. Returns True when Low mode resumes."""
        if self.mode is not Criticality.HIGH:
            return False
        if exceeded:
            self.high_mode_jobs_remaining = self.n_param
            return False
        self.high_mode_jobs_remaining -= 1
        if self.high_mode_jobs_remaining <= 0:
            self.high_mode_jobs_remaining = 0
            self.mode = Criticality.LOW
            return True
        return False


def validate_taskset(tasks: Iterable[TaskDef], tiles: Iterable[Tile], banks_per_tile: int = 8) -> list[str]:
    """Collect every violation of the task-set preconditions; empty means valid."""
    from .channels import PlacementInfeasible, check_bank_placement

    tasks = list(tasks)
    tiles = list(tiles)
    out: list[str] = []
    if not tasks:
        out.append("task set is empty")
    if not tiles:
        out.append("tile pool is empty")
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        out.append("duplicate task ids")
    tile_ids = [t.id for t in tiles]
    if len(set(tile_ids)) != len(tile_ids):
        out.append("duplicate tile ids")
    for task in tasks:
        out.extend(task.violations())
    if any(t.is_high for t in tasks):
        for mode in Criticality:
            if not any(tile.capable(Criticality.HIGH, mode) for tile in tiles):
                out.append(f"no tile can execute high-criticality tasks in {mode.label()} mode")
    for task in tasks:
        if not any(tile.ever_capable(task.criticality) for tile in tiles):
            out.append(f"task {task.label}: no capable tile")
    if tasks and tiles and not out:
        try:
            check_bank_placement(tasks, tiles, banks_per_tile)
        except PlacementInfeasible as exc:
            out.append(str(exc))
    return out
