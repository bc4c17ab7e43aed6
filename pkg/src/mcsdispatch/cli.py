"""Command line front end: run, baseline, compare, sweep, calibrate."""

from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import analysis
from .baseline import AssignmentInfeasible, run_static
from .engine import ConfigInvalid, derive_seeds, run
from .scenario import ParseError, ValidationError, load_scenario
from .timing import cycles_to_ms, ms_to_cycles, switch_overhead_exact, worst_low_task
from .trace import Rec

log = logging.getLogger("mcsdispatch")

HIST_QUANTITIES = ("loop_time", "exec_time", "copy_time")


def _scenario(args):
    scenario = load_scenario(args.scenario)
    if args.horizon is not None:
        scenario = scenario.with_horizon(ms_to_cycles(args.horizon, scenario.timing.clock_hz))
    return scenario


def _stamp(args, doc: dict) -> dict:
    if not args.no_timestamp:
        doc = {"generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"), **doc}
    return doc


def _write_run(trace, out: Path, bins: int) -> analysis.TileUsageReport:
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_trace_csv(trace, out / "trace.csv")
    usage = analysis.tile_usage(trace)
    analysis.write_usage_csv(usage, trace.meta["tasks"], out / "usage.csv")
    clock_hz = trace.meta.get("clock_hz")
    for q in HIST_QUANTITIES:
        analysis.write_histogram_csv(analysis.histogram(trace, q, bins), out / f"hist_{q}.csv", clock_hz)
    return usage


def _run_summary(scenario, trace, usage) -> dict:
    ms = lambda c: round(cycles_to_ms(c, scenario.timing.clock_hz), 6)
    return {
        "schema": "mcsdispatch.run/1",
        "kind": trace.meta["kind"],
        "scenario": scenario.name,
        "seed": trace.meta["seed"],
        "horizon_ms": ms(scenario.horizon),
        "o_switch_ms": ms(scenario.o_switch),
        "high_deadline_misses": analysis.high_deadline_misses(trace),
        "low_completed": analysis.low_completions(trace),
        "mode_switches": trace.count(Rec.MODE),
        "dropped": trace.count(Rec.DROP),
        "tiles": {str(t): {"busy_ms": ms(u.busy), "overhead_ms": ms(u.overhead), "idle_ms": ms(u.idle)}
                  for t, u in usage.tiles.items()},
    }


def cmd_run(args) -> int:
    scenario = _scenario(args)
    trace = run(scenario, args.seed)
    out = Path(args.out)
    usage = _write_run(trace, out, args.bins)
    analysis.write_json(_stamp(args, _run_summary(scenario, trace, usage)), out / "report.json")
    print(f"dynamic run: {len(trace)} records, "
          f"{analysis.high_deadline_misses(trace)} high-criticality deadline misses -> {out}")
    return 0


def cmd_baseline(args) -> int:
    scenario = _scenario(args)
    trace = run_static(scenario, seed=args.seed)
    out = Path(args.out)
    usage = _write_run(trace, out, args.bins)
    analysis.write_json(_stamp(args, _run_summary(scenario, trace, usage)), out / "report.json")
    print(f"static run: {len(trace)} records -> {out}")
    return 0


def _comparison_doc(scenario, seed, report) -> dict:
    return {"schema": analysis.REPORT_SCHEMA, "scenario": scenario.name, "seed": seed, **report.to_dict()}


def cmd_compare(args) -> int:
    scenario = _scenario(args)
    dyn = run(scenario, args.seed)
    st = run_static(scenario, seed=args.seed)
    out = Path(args.out)
    _write_run(dyn, out / "dynamic", args.bins)
    _write_run(st, out / "static", args.bins)
    report = analysis.compare(dyn, st, scenario.horizon)
    analysis.write_json(_stamp(args, _comparison_doc(scenario, args.seed, report)), out / "comparison.json")
    print(f"idle reduction {report.idle_reduction_pct:.2f}%, low throughput ratio "
          f"{report.low_throughput_ratio:.3f}, high misses static/dynamic "
          f"{report.high_deadline_misses[0]}/{report.high_deadline_misses[1]} -> {out}")
    return 0


def sweep(scenario, master_seed: int = 1, runs: int = 30, progress=None) -> dict:
    """Paired comparisons over derived seeds, ``{seed: ComparisonReport}``."""
    reports = {}
    for i, seed in enumerate(derive_seeds(master_seed, runs)):
        reports[seed] = analysis.compare(run(scenario, seed), run_static(scenario, seed=seed), scenario.horizon)
        if progress:
            progress(i, seed, reports[seed])
    return reports


def cmd_sweep(args) -> int:
    scenario = _scenario(args)

    def progress(i, seed, rep):
        print(f"[{i + 1}/{args.runs}] seed {seed}: idle reduction {rep.idle_reduction_pct:.2f}%, "
              f"ratio {rep.low_throughput_ratio:.3f}, high misses {rep.high_deadline_misses[1]}", flush=True)

    reports = sweep(scenario, args.seed, args.runs, progress)
    doc = {"schema": "mcsdispatch.sweep/1", "scenario": scenario.name, "master_seed": args.seed,
           "aggregate": analysis.aggregate(reports),
           "runs": [_comparison_doc(scenario, s, reports[s]) for s in sorted(reports)]}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_json(_stamp(args, doc), out / "comparison.json")
    agg = doc["aggregate"]
    mean = lambda name, spec: "n/a" if agg[name]["mean"] is None else format(agg[name]["mean"], spec)
    print(f"mean idle reduction {mean('idle_reduction_pct', '.2f')}%, mean low throughput ratio "
          f"{mean('low_throughput_ratio', '.3f')}, runs with high misses "
          f"{agg['high_deadline_misses_dynamic']['runs_with_misses']}/{args.runs}")
    return 0


def calibration_lines(scenario) -> list[str]:
    params = scenario.timing
    clock_hz = params.clock_hz
    buf = max((t.max_buffer_bytes for t in scenario.tasks), default=16384)

    def line(label, exact):
        ms = exact * 1000 / clock_hz
        return (f"{label}: {float(ms):.10g} ms ({float(ms):.4e} ms; exact {float(exact)} cycles, "
                f"ceil {-(-exact.numerator // exact.denominator)} cycles)")

    low = worst_low_task(scenario.tasks)
    out = [line(f"o_switch table-arithmetic ({buf}-byte buffer, no low task)",
                switch_overhead_exact(params, None, buf))]
    if low is not None:
        out.append(line(f"o_switch full formula (blocking low task {low.label}, "
                        f"{cycles_to_ms(low.t_wcet, clock_hz):g} ms)",
                        switch_overhead_exact(params, low, buf)))
    src = "override" if params.o_switch_override is not None else "full formula"
    out.append(f"o_switch in use ({src}): {cycles_to_ms(scenario.o_switch, clock_hz):.10g} ms "
               f"({scenario.o_switch} cycles)")
    return out


def cmd_calibrate(args) -> int:
    for line in calibration_lines(_scenario(args)):
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="casestudy",
                        help="scenario file or built-in name (default: casestudy)")
    common.add_argument("--horizon", type=float, default=None, metavar="MS",
                        help="override the scenario horizon, in ms")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the generation timestamp from JSON reports")
    common.add_argument("--bins", type=int, default=20, help="histogram bins (default: 20)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mcsdispatch",
                                description="Mixed-criticality dynamic dispatching simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, seed_default, help_ in (
            ("run", cmd_run, 0, "one dynamic simulation"),
            ("baseline", cmd_baseline, 0, "one static-mapping simulation"),
            ("compare", cmd_compare, 0, "paired dynamic vs static run with a shared seed"),
            ("sweep", cmd_sweep, 1, "paired comparisons over derived seeds"),
            ("calibrate", cmd_calibrate, 0, "print the derived switching overhead")):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("--seed", type=int, default=seed_default,
                        help="master seed for sweep, run seed otherwise" if name == "sweep" else "run seed")
        if name == "sweep":
            sp.add_argument("--runs", type=int, default=30, help="number of seeds (default: 30)")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed < 0 or args.seed >= 1 << 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.horizon is not None and args.horizon < 0:
        print("error: --horizon must be >= 0 ms", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: invalid scenario {args.scenario}:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except (ParseError, ConfigInvalid, AssignmentInfeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (analysis.TraceIncomplete, analysis.MismatchedScenarios) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
