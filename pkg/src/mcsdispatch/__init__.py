"""Discrete-event model of a criticality-aware task dispatcher on a
non-preemptive tile array, with a static-mapping baseline."""

from .model import Criticality, Job, JobState, SystemMode, TaskDef, Tile, validate_taskset
from .timing import (CopyTimeModel, TimingParams, copy_time, laxity, ms_to_cycles, cycles_to_ms,
                     switch_overhead, switch_time)
from .engine import ConfigInvalid, ExecTimeModel, Simulation, derive_seeds, run
from .scenario import Scenario, StaticAssignment, load_scenario
from .baseline import AssignmentInfeasible, run_static
from .analysis import ComparisonReport, aggregate, compare, high_deadline_misses, histogram, tile_usage

__all__ = [
    "Criticality", "Job", "JobState", "SystemMode", "TaskDef", "Tile", "validate_taskset",
    "CopyTimeModel", "TimingParams", "copy_time", "laxity", "ms_to_cycles", "cycles_to_ms",
    "switch_overhead", "switch_time", "ConfigInvalid", "ExecTimeModel", "Simulation", "derive_seeds",
    "run", "Scenario", "StaticAssignment", "load_scenario", "AssignmentInfeasible", "run_static",
    "ComparisonReport", "aggregate", "compare", "high_deadline_misses", "histogram", "tile_usage",
]
