"""Scenario documents: YAML with millisecond durations, validated on load."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .channels import check_bank_placement
from .engine import ExecTimeModel
from .model import Criticality, TaskDef, Tile, validate_taskset
from .timing import (DEFAULT_CLOCK_HZ, CopyTimeModel, LoopTimeModel, TimingParams,
                     check_switch_feasibility, ms_to_cycles, ms_to_exact_cycles, switch_overhead,
                     worst_low_task)


class ParseError(Exception):
    pass


class ValidationError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class StaticAssignment:
    map: dict

    def tile_of(self, task_id: int) -> int:
        return self.map[task_id]


@dataclass(frozen=True)
class Scenario:
    tasks: tuple
    exec_models: dict
    tiles: tuple
    timing: TimingParams
    horizon: int
    n_param: int = 1
    queue_capacity: int = 16
    channel_capacity: int = 16
    hop_latency: int = 8
    metadata_bytes: int = 32
    banks_per_tile: int = 8
    static_assignment: Optional[StaticAssignment] = None
    name: str = "scenario"

    @property
    def o_switch(self) -> int:
        """Switching overhead used by the dispatcher (override, else full formula)."""
        buf = max((t.max_buffer_bytes for t in self.tasks), default=16384)
        return switch_overhead(self.timing, worst_low_task(self.tasks), buf)

    def task(self, task_id: int) -> TaskDef:
        return next(t for t in self.tasks if t.id == task_id)

    def bank_placement(self) -> dict:
        return check_bank_placement(self.tasks, self.tiles, self.banks_per_tile)

    def violations(self) -> list[str]:
        out = validate_taskset(self.tasks, self.tiles, self.banks_per_tile)
        for task in self.tasks:
            model = self.exec_models.get(task.id)
            if model is None:
                out.append(f"task {task.label}: no execution-time model")
            else:
                out.extend(model.violations(task))
        if self.horizon < 0:
            out.append("horizon must be >= 0")
        if self.n_param < 1:
            out.append("n_param must be a positive integer")
        if self.queue_capacity < 1:
            out.append("queues.capacity must be >= 1")
        if not out:
            out.extend(check_switch_feasibility(self.tasks, self.o_switch))
        return out

    def with_horizon(self, horizon: int) -> "Scenario":
        return replace(self, horizon=horizon)

    def with_o_switch(self, cycles: Optional[int]) -> "Scenario":
        return replace(self, timing=replace(self.timing, o_switch_override=cycles))

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


# -- loading --------------------------------------------------------------------

def _need(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"{where}: missing required field '{key}'")
    return doc[key]


def _ms(value, clock_hz: int, where: str) -> int:
    try:
        return ms_to_cycles(Fraction(str(value)), clock_hz)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"{where}: not a duration in ms ({value!r})") from exc


def _exec_model(doc, task: TaskDef, clock_hz: int, where: str, base: Path) -> ExecTimeModel:
    if doc is None:
        return ExecTimeModel.constant(task.t_eet)
    kind = str(_need(doc, "kind", where)).lower()
    if kind == "constant":
        value = doc.get("value_ms")
        return ExecTimeModel.constant(task.t_eet if value is None else _ms(value, clock_hz, f"{where}.value_ms"))
    if kind == "bimodal":
        def rng(key):
            pair = _need(doc, key, where)
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ParseError(f"{where}.{key}: expected [min_ms, max_ms]")
            return tuple(_ms(v, clock_hz, f"{where}.{key}") for v in pair)
        return ExecTimeModel.bimodal(float(_need(doc, "p_exceed", where)), rng("low_range_ms"), rng("high_range_ms"))
    if kind == "empirical":
        if "samples_ms" in doc:
            samples = doc["samples_ms"]
        else:
            path = Path(str(_need(doc, "file", where)))
            path = path if path.is_absolute() else base / path
            try:
                samples = [line.split(",")[0] for line in path.read_text().split()
                           if line and not line.startswith("#")]
            except OSError as exc:
                raise ParseError(f"{where}.file: {exc}") from exc
        return ExecTimeModel.empirical([_ms(s, clock_hz, f"{where}.samples") for s in samples])
    raise ParseError(f"{where}.kind: unknown model {kind!r}")


def _crit_set(values, where: str) -> frozenset:
    try:
        return frozenset(Criticality.parse(v) for v in (values or []))
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def parse_scenario(doc: dict, name: str = "scenario", base: Path = Path(".")) -> Scenario:
    """Build a Scenario from a parsed document without validating it."""
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a mapping")
    clock_hz = int(doc.get("clock_hz", DEFAULT_CLOCK_HZ))

    tiles = []
    tile_docs = _need(doc, "tiles", "scenario")
    if not isinstance(tile_docs, list) or not tile_docs:
        raise ParseError("scenario.tiles: expected a non-empty list")
    for i, td in enumerate(tile_docs):
        where = f"tiles[{i}]"
        tiles.append(Tile(int(_need(td, "id", where)),
                          _crit_set(_need(td, "low_mode", where), f"{where}.low_mode"),
                          _crit_set(_need(td, "high_mode", where), f"{where}.high_mode"),
                          int(td.get("distance", 1))))

    tdoc = doc.get("timing", {}) or {}
    cdoc = tdoc.get("copy", {}) or {}
    copy_model = CopyTimeModel.calibrated(
        anchor_bytes=int(cdoc.get("anchor_bytes", 16384)),
        anchor_ms=Fraction(str(cdoc.get("anchor_ms", "30.28e-4"))),
        sync_fraction=Fraction(str(cdoc.get("sync_fraction", "0.1"))),
        clock_hz=clock_hz)
    ldoc = tdoc.get("loop_time", {}) or {}
    kind = str(ldoc.get("kind", "constant")).lower()
    if kind not in ("constant", "uniform"):
        raise ParseError(f"timing.loop_time.kind: unknown kind {kind!r}")

    def opt_ms(d, key):
        return None if d.get(key) is None else _ms(d[key], clock_hz, f"timing.loop_time.{key}")

    loop_model = LoopTimeModel(kind, opt_ms(ldoc, "min_ms"), opt_ms(ldoc, "max_ms"),
                               opt_ms(ldoc, "empty_min_ms"), opt_ms(ldoc, "empty_max_ms"))
    override = tdoc.get("o_switch_override_ms")
    timing = TimingParams(
        t_loop_wc=ms_to_exact_cycles(Fraction(str(tdoc.get("t_loop_wc_ms", "30.3e-4"))), clock_hz),
        t_str=ms_to_exact_cycles(Fraction(str(tdoc.get("t_str_ms", "7.2e-6"))), clock_hz),
        t_start_wc=ms_to_exact_cycles(Fraction(str(tdoc.get("t_start_wc_ms", "2.66e-4"))), clock_hz),
        copy_model=copy_model,
        o_switch_override=None if override is None else _ms(override, clock_hz, "timing.o_switch_override_ms"),
        clock_hz=clock_hz,
        loop_model=loop_model)

    tasks, models = [], {}
    task_docs = _need(doc, "tasks", "scenario")
    if not isinstance(task_docs, list) or not task_docs:
        raise ParseError("scenario.tasks: expected a non-empty list")
    for i, td in enumerate(task_docs):
        where = f"tasks[{i}]"
        period = _ms(_need(td, "period_ms", where), clock_hz, f"{where}.period_ms")
        try:
            crit = Criticality.parse(_need(td, "criticality", where))
        except ValueError as exc:
            raise ParseError(f"{where}.criticality: {exc}") from exc
        task = TaskDef(
            id=int(_need(td, "id", where)),
            criticality=crit,
            t_eet=_ms(_need(td, "t_eet_ms", where), clock_hz, f"{where}.t_eet_ms"),
            t_wcet=_ms(_need(td, "t_wcet_ms", where), clock_hz, f"{where}.t_wcet_ms"),
            period=period,
            deadline=_ms(td["deadline_ms"], clock_hz, f"{where}.deadline_ms") if "deadline_ms" in td else period,
            input_buffer_bytes=int(_need(td, "input_buffer_bytes", where)),
            output_buffer_bytes=int(_need(td, "output_buffer_bytes", where)),
            name=str(td.get("name", "")),
            offset=_ms(td.get("offset_ms", 0), clock_hz, f"{where}.offset_ms"),
        )
        tasks.append(task)
        models[task.id] = _exec_model(td.get("exec_model"), task, clock_hz, f"{where}.exec_model", base)

    static = doc.get("static_assignment")
    if static is not None:
        if not isinstance(static, dict):
            raise ParseError("static_assignment: expected a mapping task id -> tile id")
        static = StaticAssignment({int(k): int(v) for k, v in static.items()})

    qdoc = doc.get("queues", {}) or {}
    chdoc = doc.get("channels", {}) or {}
    return Scenario(
        tasks=tuple(tasks), exec_models=models, tiles=tuple(tiles), timing=timing,
        horizon=_ms(_need(doc, "horizon_ms", "scenario"), clock_hz, "horizon_ms"),
        n_param=int(doc.get("n_param", 1)),
        queue_capacity=int(qdoc.get("capacity", 16)),
        metadata_bytes=int(qdoc.get("metadata_bytes", 32)),
        channel_capacity=int(chdoc.get("capacity", 16)),
        hop_latency=int(chdoc.get("hop_latency_cycles", 8)),
        banks_per_tile=int(doc.get("banks_per_tile", 8)),
        static_assignment=static,
        name=name,
    )


def builtin_scenarios() -> list[str]:
    folder = resources.files("mcsdispatch") / "scenarios"
    return sorted(p.name.removesuffix(".scenario") for p in folder.iterdir() if p.name.endswith(".scenario"))


def resolve_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    builtin = resources.files("mcsdispatch") / "scenarios" / f"{p.name.removesuffix('.scenario')}.scenario"
    if builtin.is_file():
        return Path(str(builtin))
    raise ParseError(f"scenario file not found: {path}")


def load_scenario(path, validate: bool = True) -> Scenario:
    """Read and validate a scenario file (or a built-in name such as 'casestudy')."""
    p = resolve_path(path)
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ParseError(f"{p}: {exc}") from exc
    scenario = parse_scenario(doc, p.stem, p.parent)
    if validate:
        problems = scenario.violations()
        if problems:
            raise ValidationError(problems)
    return scenario
