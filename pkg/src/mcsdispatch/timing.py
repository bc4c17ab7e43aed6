"""Laxity, switch-time and switching-overhead arithmetic in integer clock cycles.

Durations that come from measured millisecond values are kept as exact
``Fraction`` cycle counts; everything handed to the simulator is rounded up.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

from .model import TaskDef

DEFAULT_CLOCK_HZ = 1_250_000_000

# measured worst-case overhead elements, milliseconds
TABLE_T_LOOP_MS = Fraction("30.3e-4")
TABLE_T_CPY_MS = Fraction("30.28e-4")
TABLE_T_STR_MS = Fraction("7.2e-6")
TABLE_T_START_MS = Fraction("2.66e-4")
CASE_STUDY_O_SWITCH_MS = Fraction("20e-3")

HOP_LATENCY_CYCLES = 8
ANCHOR_BYTES = 16 * 1024


def _exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))


def ceil_cycles(value) -> int:
    return math.ceil(_exact(value))


def ms_to_exact_cycles(ms, clock_hz: int = DEFAULT_CLOCK_HZ) -> Fraction:
    ms = _exact(ms)
    if ms < 0:
        raise ValueError(f"negative duration {ms} ms")
    return ms * clock_hz / 1000


def ms_to_cycles(ms, clock_hz: int = DEFAULT_CLOCK_HZ) -> int:
    """Convert milliseconds to cycles, rounding up."""
    return math.ceil(ms_to_exact_cycles(ms, clock_hz))


def cycles_to_ms(cycles, clock_hz: int = DEFAULT_CLOCK_HZ) -> float:
    return float(_exact(cycles) * 1000 / clock_hz)


@dataclass(frozen=True)
class CopyTimeModel:
    """Affine buffer-copy cost with exact calibration anchors.

    ``copy_time(b) = sync_overhead + ceil(b * per_byte)`` unless ``b`` is an
    anchor size, in which case the anchor's measured duration is used.
    """

    sync_overhead: int
    per_byte: Fraction
    anchor_points: tuple = ()

    @classmethod
    def calibrated(cls, anchor_bytes: int = ANCHOR_BYTES, anchor_ms=TABLE_T_CPY_MS,
                   sync_fraction=Fraction(1, 10), clock_hz: int = DEFAULT_CLOCK_HZ) -> "CopyTimeModel":
        anchor = ms_to_exact_cycles(anchor_ms, clock_hz)
        sync = math.ceil(anchor * _exact(sync_fraction))
        if sync > anchor:
            raise ValueError("sync overhead exceeds the anchor copy time")
        per_byte = (anchor - sync) / anchor_bytes
        return cls(sync, per_byte, ((anchor_bytes, anchor),))

    def exact(self, nbytes: int) -> Fraction:
        if nbytes <= 0:
            raise ValueError("copy size must be positive")
        for size, cycles in self.anchor_points:
            if size == nbytes:
                return _exact(cycles)
        return Fraction(self.sync_overhead + math.ceil(nbytes * self.per_byte))

    def __call__(self, nbytes: int) -> int:
        return _copy_cycles(self, nbytes)


@lru_cache(maxsize=256)
def _copy_cycles(model: CopyTimeModel, nbytes: int) -> int:
    return math.ceil(model.exact(nbytes))


def copy_time(model: CopyTimeModel, nbytes: int) -> int:
    return model(nbytes)


@dataclass(frozen=True)
class LoopTimeModel:
    """Per-iteration dispatcher loop duration in cycles.

    ``kind='constant'`` charges ``high`` for every iteration; ``'uniform'``
    draws working iterations from [low, high] and empty ones from
    [empty_low, empty_high].
    """

    kind: str = "constant"
    low: Optional[int] = None
    high: Optional[int] = None
    empty_low: Optional[int] = None
    empty_high: Optional[int] = None

    @property
    def constant(self) -> bool:
        return self.kind == "constant"


@dataclass(frozen=True)
class TimingParams:
    t_loop_wc: Fraction
    t_str: Fraction
    t_start_wc: Fraction
    copy_model: CopyTimeModel
    o_switch_override: Optional[int] = None
    clock_hz: int = DEFAULT_CLOCK_HZ
    loop_model: LoopTimeModel = field(default_factory=LoopTimeModel)

    @classmethod
    def defaults(cls, clock_hz: int = DEFAULT_CLOCK_HZ, **overrides) -> "TimingParams":
        params = cls(
            t_loop_wc=ms_to_exact_cycles(TABLE_T_LOOP_MS, clock_hz),
            t_str=ms_to_exact_cycles(TABLE_T_STR_MS, clock_hz),
            t_start_wc=ms_to_exact_cycles(TABLE_T_START_MS, clock_hz),
            copy_model=CopyTimeModel.calibrated(clock_hz=clock_hz),
            clock_hz=clock_hz,
        )
        return replace(params, **overrides) if overrides else params

    def __post_init__(self):
        for name in ("t_loop_wc", "t_str", "t_start_wc"):
            value = _exact(getattr(self, name))
            if value < 0:
                raise ValueError(f"{name} must be >= 0")
            object.__setattr__(self, name, value)
        if self.o_switch_override is not None and self.o_switch_override < 0:
            raise ValueError("o_switch_override must be >= 0")

    @property
    def loop_cycles(self) -> int:
        return math.ceil(self.t_loop_wc)

    @property
    def str_cycles(self) -> int:
        return math.ceil(self.t_str)

    @property
    def start_cycles(self) -> int:
        return math.ceil(self.t_start_wc)

    def ms(self, cycles) -> float:
        return cycles_to_ms(cycles, self.clock_hz)


def laxity(task: TaskDef) -> int:
    return task.deadline - task.t_wcet


class SwitchPoint(NamedTuple):
    time: int
    feasible: bool


def switch_time(arrival: int, task: TaskDef, o_switch: int) -> SwitchPoint:
    """Latest instant the job released at ``arrival`` may still be started."""
    if not task.is_high:
        raise ValueError(f"switch time is defined for high-criticality tasks only ({task.label})")
    margin = laxity(task)
    feasible = o_switch < margin
    return SwitchPoint(arrival + max(margin - o_switch, 0), feasible)


def switch_overhead_exact(params: TimingParams, worst_low_task: Optional[TaskDef] = None,
                          buffer_bytes: int = ANCHOR_BYTES) -> Fraction:
    low = worst_low_task.t_wcet if worst_low_task is not None else 0
    return (2 * params.t_loop_wc + params.copy_model.exact(buffer_bytes)
            + params.t_str + params.t_start_wc + low)


def switch_overhead(params: TimingParams, worst_low_task: Optional[TaskDef] = None,
                    buffer_bytes: int = ANCHOR_BYTES) -> int:
    """Worst-case delay between a mode switch and the high job starting.

    Without ``worst_low_task`` the blocking low job is left out, which
    reproduces the published arithmetic. Rounded up once, after summation.
    """
    if params.o_switch_override is not None:
        return params.o_switch_override
    return math.ceil(switch_overhead_exact(params, worst_low_task, buffer_bytes))


def worst_low_task(tasks: Sequence[TaskDef]) -> Optional[TaskDef]:
    lows = [t for t in tasks if not t.is_high]
    return max(lows, key=lambda t: (t.t_wcet, -t.id)) if lows else None


def check_switch_feasibility(tasks: Sequence[TaskDef], o_switch: int) -> list[str]:
    out = []
    for task in tasks:
        if task.is_high and not switch_time(0, task, o_switch).feasible:
            out.append(f"task {task.label}: o_switch ({o_switch} cycles) >= laxity "
                       f"({laxity(task)} cycles), context switch infeasible")
    return out
