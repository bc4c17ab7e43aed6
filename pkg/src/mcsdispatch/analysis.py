"""Metrics over event traces: tile usage partition, static-vs-dynamic
comparison, histograms, and the CSV/JSON writers."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .channels import MsgType
from .model import Criticality
from .timing import DEFAULT_CLOCK_HZ, cycles_to_ms
from .trace import COLUMNS, EventTrace, Rec

USAGE_HEADER = ("Tile", "High1", "High2", "Low1", "Low2", "Free")
REPORT_SCHEMA = "mcsdispatch.comparison/1"


class TraceIncomplete(Exception):
    pass


class MismatchedScenarios(Exception):
    pass


def fmt_ms(cycles, clock_hz: int = DEFAULT_CLOCK_HZ) -> str:
    return f"{cycles * 1000 / clock_hz:.6f}"


# -- tile usage ---------------------------------------------------------------

@dataclass
class TileUsage:
    tile: int
    busy_by_task: dict = field(default_factory=dict)
    overhead: int = 0
    idle: int = 0

    @property
    def busy(self) -> int:
        return sum(self.busy_by_task.values())


@dataclass
class TileUsageReport:
    horizon: int
    tiles: dict
    clock_hz: int = DEFAULT_CLOCK_HZ
    dispatcher_work: int = 0

    @property
    def busy(self) -> int:
        return sum(u.busy for u in self.tiles.values())

    @property
    def idle(self) -> int:
        return sum(u.idle for u in self.tiles.values())

    @property
    def overhead(self) -> int:
        return sum(u.overhead for u in self.tiles.values())

    def ms(self, cycles) -> float:
        return cycles_to_ms(cycles, self.clock_hz)


def _job_intervals(trace: EventTrace):
    """Per job: tile, copy start, start, completion, completion-message delivery."""
    m = trace.matrix()
    kind = m[:, 1]
    jobs: dict = {}

    def rows(k):
        return m[kind == int(k)]

    for r in rows(Rec.DISPATCH):
        jobs[(int(r[2]), int(r[3]))] = [int(r[4]), int(r[6]), None, None, None]
    for r in rows(Rec.START):
        rec = jobs.get((int(r[2]), int(r[3])))
        if rec is None or rec[0] != r[4]:
            raise TraceIncomplete(f"START of job {r[2]}#{r[3]} on tile {r[4]} without a matching DISPATCH")
        rec[2] = int(r[0])
    for r in rows(Rec.COMPLETE):
        rec = jobs.get((int(r[2]), int(r[3])))
        if rec is None or rec[2] is None:
            raise TraceIncomplete(f"COMPLETE of job {r[2]}#{r[3]} without a START")
        rec[3] = int(r[0])
    for r in rows(Rec.MSG_SEND):
        if r[7] >> 2 == int(MsgType.TASK_COMPLETE):
            rec = jobs.get((int(r[2]), int(r[3])))
            if rec is None or rec[3] is None:
                raise TraceIncomplete(f"completion message of job {r[2]}#{r[3]} before its COMPLETE")
            rec[4] = int(r[6])
    return jobs


def tile_usage(trace: EventTrace, horizon: Optional[int] = None) -> TileUsageReport:
    """Split each tile's [0, horizon) into busy (per task), overhead and idle.

    Busy is [start, completion); overhead is [copy start, start) plus
    [completion, completion-message delivery). Everything else is idle.
    """
    horizon = trace.horizon if horizon is None else horizon
    if trace.meta and trace.count(Rec.SIM_END) == 0 and len(trace):
        raise TraceIncomplete("trace has no SIM_END record")
    tile_ids = list(trace.meta.get("tiles", []))
    usage = {t: TileUsage(t) for t in tile_ids}
    spans: dict = {t: [] for t in tile_ids}

    def clip(a, b):
        return max(a, 0), min(b, horizon)

    for (task, seq), (tile, c0, start, done, delivered) in sorted(_job_intervals(trace).items()):
        if tile not in usage:
            usage[tile] = TileUsage(tile)
            spans[tile] = []
        u = usage[tile]
        a, b = clip(c0, horizon if start is None else start)
        if b > a:
            u.overhead += b - a
            spans[tile].append((a, b))
        if start is not None:
            a, b = clip(start, horizon if done is None else done)
            if b > a:
                u.busy_by_task[task] = u.busy_by_task.get(task, 0) + b - a
                spans[tile].append((a, b))
        if done is not None and delivered is not None:
            a, b = clip(done, delivered)
            if b > a:
                u.overhead += b - a
                spans[tile].append((a, b))

    for tile, u in usage.items():
        covered, last = 0, 0
        for a, b in sorted(spans[tile]):
            if a < last:
                raise TraceIncomplete(f"tile {tile}: overlapping activity at cycle {a}")
            covered += b - a
            last = b
        u.idle = horizon - covered
    loops = trace.of_kind(Rec.LOOP)["value"]
    return TileUsageReport(horizon, dict(sorted(usage.items())),
                           trace.meta.get("clock_hz", DEFAULT_CLOCK_HZ), int(loops.sum()))


# -- comparison ---------------------------------------------------------------

@dataclass
class ComparisonReport:
    horizon: int
    idle_static: int
    idle_dynamic: int
    idle_reduction_pct: float
    low_completed: tuple
    low_throughput_ratio: float
    high_deadline_misses: tuple
    overhead_cycles: int
    overhead_fraction: float
    overhead_horizon_fraction: float
    o_switch: int
    o_switch_vs_horizon: float
    o_switch_vs_low_eet: float
    mode_switches: int
    dropped: tuple
    tiles: dict = field(default_factory=dict)
    clock_hz: int = DEFAULT_CLOCK_HZ

    def to_dict(self) -> dict:
        ms = lambda c: round(cycles_to_ms(c, self.clock_hz), 6)
        return {
            "horizon_ms": ms(self.horizon),
            "idle_static_ms": ms(self.idle_static),
            "idle_dynamic_ms": ms(self.idle_dynamic),
            "idle_reduction_pct": _num(self.idle_reduction_pct),
            "low_completed": {"static": self.low_completed[0], "dynamic": self.low_completed[1]},
            "low_throughput_ratio": _num(self.low_throughput_ratio),
            "high_deadline_misses": {"static": self.high_deadline_misses[0],
                                     "dynamic": self.high_deadline_misses[1]},
            "overhead_ms": ms(self.overhead_cycles),
            "overhead_fraction": _num(self.overhead_fraction),
            "overhead_horizon_fraction": _num(self.overhead_horizon_fraction),
            "o_switch_ms": ms(self.o_switch),
            "o_switch_vs_horizon": _num(self.o_switch_vs_horizon),
            "o_switch_vs_low_eet": _num(self.o_switch_vs_low_eet),
            "mode_switches": self.mode_switches,
            "dropped": {"static": self.dropped[0], "dynamic": self.dropped[1]},
            "tiles": self.tiles,
        }


def _num(x: float, digits: int = 9):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return round(float(x), digits)


def _ratio(a, b) -> float:
    if b == 0:
        return float("nan") if a == 0 else math.copysign(math.inf, a)
    return a / b


def _levels(trace: EventTrace) -> dict:
    return {int(tid): info["criticality"] for tid, info in trace.meta.get("tasks", {}).items()}


def low_completions(trace: EventTrace, horizon: Optional[int] = None) -> int:
    horizon = trace.horizon if horizon is None else horizon
    lows = [t for t, c in _levels(trace).items() if c == Criticality.LOW.label()]
    c = trace.of_kind(Rec.COMPLETE)
    return int(np.count_nonzero(np.isin(c["task"], lows) & (c["time"] <= horizon)))


def high_deadline_misses(trace: EventTrace, horizon: Optional[int] = None) -> int:
    """Completed-late high jobs plus high jobs whose deadline passed unserved."""
    horizon = trace.horizon if horizon is None else horizon
    highs = [t for t, c in _levels(trace).items() if c == Criticality.HIGH.label()]
    arr = trace.of_kind(Rec.ARRIVAL)
    done = trace.of_kind(Rec.COMPLETE)
    mask = np.isin(arr["task"], highs)
    finished = {(int(t), int(s)): int(time) for t, s, time in zip(done["task"], done["seq"], done["time"])}
    misses = 0
    for t, s, deadline in zip(arr["task"][mask], arr["seq"][mask], arr["aux"][mask]):
        end = finished.get((int(t), int(s)))
        if end is None:
            misses += int(deadline < horizon)
        elif end > deadline:
            misses += 1
    return misses


def _fingerprint(trace: EventTrace):
    meta = trace.meta
    tasks = {int(k): tuple(sorted(v.items())) for k, v in meta.get("tasks", {}).items()}
    return tasks, tuple(meta.get("tiles", ())), meta.get("horizon")


def compare(dynamic: EventTrace, static: EventTrace, horizon: Optional[int] = None) -> ComparisonReport:
    if _fingerprint(dynamic) != _fingerprint(static):
        raise MismatchedScenarios("dynamic and static traces come from different task sets, tiles or horizons")
    horizon = dynamic.horizon if horizon is None else horizon
    if horizon != dynamic.horizon:
        raise MismatchedScenarios(f"horizon {horizon} differs from the traces' horizon {dynamic.horizon}")
    ud, us = tile_usage(dynamic, horizon), tile_usage(static, horizon)
    low_s, low_d = low_completions(static, horizon), low_completions(dynamic, horizon)
    tasks = dynamic.meta.get("tasks", {})
    low_eets = [v["t_eet"] for v in tasks.values() if v["criticality"] == Criticality.LOW.label()]
    o_switch = int(dynamic.meta.get("o_switch", 0))
    n_tiles = max(len(ud.tiles), 1)
    clock_hz = dynamic.meta.get("clock_hz", DEFAULT_CLOCK_HZ)
    ms = lambda c: round(cycles_to_ms(c, clock_hz), 6)
    per_tile = {}
    for tid in sorted(set(ud.tiles) | set(us.tiles)):
        row = {}
        for name, rep in (("static", us), ("dynamic", ud)):
            u = rep.tiles.get(tid, TileUsage(tid, idle=horizon))
            row[name] = {"busy_ms": ms(u.busy), "overhead_ms": ms(u.overhead), "idle_ms": ms(u.idle)}
        per_tile[str(tid)] = row
    return ComparisonReport(
        horizon=horizon,
        idle_static=us.idle,
        idle_dynamic=ud.idle,
        idle_reduction_pct=100.0 * _ratio(us.idle - ud.idle, us.idle),
        low_completed=(low_s, low_d),
        low_throughput_ratio=_ratio(low_d, low_s),
        high_deadline_misses=(high_deadline_misses(static, horizon), high_deadline_misses(dynamic, horizon)),
        overhead_cycles=ud.overhead,
        overhead_fraction=_ratio(ud.overhead, ud.busy),
        overhead_horizon_fraction=_ratio(ud.overhead, horizon * n_tiles),
        o_switch=o_switch,
        o_switch_vs_horizon=_ratio(o_switch, horizon),
        o_switch_vs_low_eet=_ratio(o_switch, min(low_eets)) if low_eets else float("nan"),
        mode_switches=dynamic.count(Rec.MODE),
        dropped=(static.count(Rec.DROP), dynamic.count(Rec.DROP)),
        tiles=per_tile,
        clock_hz=clock_hz,
    )


AGGREGATE_FIELDS = ("idle_reduction_pct", "low_throughput_ratio", "overhead_fraction",
                    "overhead_horizon_fraction", "mode_switches")


def aggregate(reports: dict) -> dict:
    """mean/min/max of the scalar report fields over ``{seed: report}``."""
    seeds = sorted(reports)
    out = {"runs": len(seeds), "seeds": seeds}
    for name in AGGREGATE_FIELDS:
        vals = np.array([float(getattr(reports[s], name)) for s in seeds])
        out[name] = {"mean": _num(vals.mean()) if len(vals) else None,
                     "min": _num(vals.min()) if len(vals) else None,
                     "max": _num(vals.max()) if len(vals) else None}
    misses = [reports[s].high_deadline_misses[1] for s in seeds]
    out["high_deadline_misses_dynamic"] = {"total": int(sum(misses)),
                                           "runs_with_misses": int(sum(m > 0 for m in misses)),
                                           "max": int(max(misses, default=0))}
    out["high_deadline_misses_static"] = int(sum(reports[s].high_deadline_misses[0] for s in seeds))
    return out


# -- histograms ---------------------------------------------------------------

@dataclass
class Histogram:
    columns: tuple
    rows: list

    @property
    def total(self) -> int:
        return int(sum(r[1] for r in self.rows)) if self.columns == ("right", "count") else len(self.rows)


QUANTITIES = ("loop_time", "exec_time", "copy_time")


def histogram(trace: EventTrace, quantity: str, bins: Union[int, Sequence[int]] = 20,
              task: Optional[int] = None) -> Histogram:
    """Runtime histogram as (right edge [cycles], count) rows, or for
    ``copy_time`` the maximum copy duration per buffer size (Size, Max)."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown histogram quantity {quantity!r}; expected one of {QUANTITIES}")
    if quantity == "copy_time":
        c = trace.of_kind(Rec.COPY_DONE)
        rows = {}
        for size, dur in zip(c["aux"].tolist(), c["value"].tolist()):
            rows[size] = max(rows.get(size, 0), dur)
        return Histogram(("Size", "Max"), sorted(rows.items()))
    if quantity == "loop_time":
        data = trace.of_kind(Rec.LOOP)["value"]
    else:
        s = trace.of_kind(Rec.START)
        data = s["value"] if task is None else s["value"][s["task"] == task]
    if len(data) == 0:
        return Histogram(("right", "count"), [])
    if isinstance(bins, int):
        lo, hi = int(data.min()), int(data.max())
        if lo == hi:
            lo, hi = lo - 1, hi
        edges = np.linspace(lo, hi, bins + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    counts, edges = np.histogram(data, bins=edges)
    return Histogram(("right", "count"), [(float(r), int(n)) for r, n in zip(edges[1:], counts)])


# -- writers ------------------------------------------------------------------

def write_trace_csv(trace: EventTrace, path) -> None:
    clock_hz = trace.meta.get("clock_hz", DEFAULT_CLOCK_HZ)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time_ms", "time_cycles", "event") + COLUMNS[2:])
        for row in trace.matrix().tolist():
            w.writerow([fmt_ms(row[0], clock_hz), row[0], Rec(row[1]).name] + row[2:])


def usage_columns(tasks_meta: dict) -> dict:
    """Map task id -> usage column. Tasks of a level are numbered in id order;
    beyond the second, they share the level's second column."""
    out = {}
    for level, prefix in ((Criticality.HIGH, "High"), (Criticality.LOW, "Low")):
        ids = sorted(int(t) for t, v in tasks_meta.items() if v["criticality"] == level.label())
        for i, tid in enumerate(ids):
            out[tid] = f"{prefix}{min(i + 1, 2)}"
    return out


def write_usage_csv(report: TileUsageReport, tasks_meta: dict, path) -> None:
    cols = usage_columns(tasks_meta)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(USAGE_HEADER)
        for tid, u in report.tiles.items():
            acc = dict.fromkeys(USAGE_HEADER[1:], 0)
            for task, busy in u.busy_by_task.items():
                acc[cols[task]] += busy
            acc["Free"] = u.idle
            w.writerow([tid] + [fmt_ms(acc[c], report.clock_hz) for c in USAGE_HEADER[1:]])


def write_histogram_csv(hist: Histogram, path, clock_hz: int = DEFAULT_CLOCK_HZ) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(hist.columns)
        for a, b in hist.rows:
            if hist.columns == ("Size", "Max"):
                w.writerow((a, fmt_ms(b, clock_hz)))
            else:
                w.writerow((fmt_ms(a, clock_hz), b))


def write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")
