"""Command-line front end.

Verbs:
  run       execute an experiment matrix (algorithms x rates x seeds) and
            write per-run, summary, comparison, and plot-ready CSVs
  select    compute one relay assignment and optionally save it
  validate  check a saved assignment for consistency and coverage
  presets   list the shipped layout and experiment presets

Experiment plans come from an INI file (--config) or a named preset
(--preset). Every CSV an experiment writes is a pure function of the plan,
so reruns are byte-identical; wall-clock information goes only into
metadata.json.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__
from .metrics import (
    PowerProfile,
    mean_relay_current_ma,
    network_pdr,
    relay_load_stats,
    summarize,
    write_node_csv,
)
from .relay_selection import (
    RelayAssignment,
    all_relays,
    crns_select,
    knn_relays,
    load_assignment_csv,
    random_relays,
    save_assignment_csv,
    validate_assignment,
)
from .sim_engine import ChannelConfig, RepeatPolicy, ScenarioConfig, SimResult, run
from .topology import (
    LAYOUT_PRESETS,
    LayoutSpec,
    Segment,
    Topology,
    build_layout,
    feet,
    topology_from_positions,
)

ALGORITHMS = ("crns", "all", "random", "knn")


class PlanError(ValueError):
    """Raised for malformed experiment plans."""


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything an experiment needs: geometry, matrix, radio, power."""

    layout: LayoutSpec
    algorithms: tuple[str, ...] = ALGORITHMS
    rates_pps: tuple[float, ...] = (1.0, 4.0)
    n_seeds: int = 20
    base_seed: int = 1000
    sim_time_s: float = 20.0
    ttl: int = 127
    range_r_m: float = 100.0
    # the everyone-forwards baseline is usually quoted with a hotter radio,
    # so its range is configured separately
    all_relays_range_m: float = 150.0
    tx_power_dbm: float = 20.0
    repeat_policy: RepeatPolicy = field(default_factory=RepeatPolicy)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    power: PowerProfile = field(default_factory=PowerProfile)
    # relay budget for the random and knn baselines; None matches whatever
    # size the connectivity-ranked strategy produces on this layout
    relay_budget: Optional[int] = None


EXPERIMENT_PRESETS: dict[str, ExperimentPlan] = {
    "paper": ExperimentPlan(layout=LAYOUT_PRESETS["fdot_45mph"]),
}


def parse_length(text: str) -> float:
    """Meters from '30ft', '9.1m', or a bare number of meters."""
    t = text.strip().lower()
    try:
        if t.endswith("ft"):
            return feet(float(t[:-2]))
        if t.endswith("m"):
            return float(t[:-1])
        return float(t)
    except ValueError:
        raise PlanError(f"cannot parse length {text!r}") from None


def _parse_segments(text: str) -> tuple[Segment, ...]:
    segments = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if len(pieces) != 3:
            raise PlanError(
                f"segment {part!r} must be name:length:spacing, e.g. taper:540ft:30ft"
            )
        name, length, spacing = pieces
        segments.append(Segment(name.strip(), parse_length(length), parse_length(spacing)))
    if not segments:
        raise PlanError("segments list is empty")
    return tuple(segments)


_SCHEMA = {
    "layout": {"preset", "segments", "sink_placement", "sink_standoff", "lateral_offset"},
    "scenario": {
        "algorithms",
        "rates",
        "seeds",
        "base_seed",
        "sim_time_s",
        "ttl",
        "range",
        "all_relays_range",
        "tx_power_dbm",
    },
    "channel": {
        "n_adv_channels",
        "frame_duration_us",
        "adv_jitter_ms",
        "reception_model",
        "loss_p",
    },
    "power": {"i_tx_ma", "i_listen_ma", "i_sleep_ma"},
    "plan": {"mode", "fixed_count", "relay_budget"},
}


def parse_plan(path) -> ExperimentPlan:
    """Read an experiment plan from an INI file.

    Unknown sections or keys are errors (a typo silently falling back to a
    default would invalidate a whole study). Lengths accept ft/m suffixes.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise PlanError(f"cannot read plan file {path}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise PlanError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise PlanError(f"unknown key {section}.{key}")

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key)
        return default

    layout_preset = get("layout", "preset")
    segments_text = get("layout", "segments")
    if layout_preset and segments_text:
        raise PlanError("give layout.preset or layout.segments, not both")
    if layout_preset:
        if layout_preset not in LAYOUT_PRESETS:
            raise PlanError(f"unknown layout preset {layout_preset!r}")
        layout = LAYOUT_PRESETS[layout_preset]
    elif segments_text:
        layout = LayoutSpec(segments=_parse_segments(segments_text))
    else:
        layout = LAYOUT_PRESETS["fdot_45mph"]
    placement = get("layout", "sink_placement")
    if placement is not None:
        placement = placement.strip()
        sink_placement = (
            placement if placement in ("start", "end") else parse_length(placement)
        )
        layout = replace(layout, sink_placement=sink_placement)
    standoff = get("layout", "sink_standoff")
    if standoff is not None:
        layout = replace(layout, sink_standoff_m=parse_length(standoff))
    lateral = get("layout", "lateral_offset")
    if lateral is not None:
        layout = replace(layout, lateral_offset_m=parse_length(lateral))

    try:
        algorithms = tuple(
            a.strip() for a in get("scenario", "algorithms", "crns,all,random,knn").split(",")
        )
        for a in algorithms:
            if a not in ALGORITHMS:
                raise PlanError(f"unknown algorithm {a!r}")
        rates = tuple(float(r) for r in get("scenario", "rates", "1,4").split(","))
        budget_text = get("plan", "relay_budget", "auto").strip().lower()
        plan = ExperimentPlan(
            layout=layout,
            algorithms=algorithms,
            rates_pps=rates,
            n_seeds=int(get("scenario", "seeds", "20")),
            base_seed=int(get("scenario", "base_seed", "1000")),
            sim_time_s=float(get("scenario", "sim_time_s", "20")),
            ttl=int(get("scenario", "ttl", "127")),
            range_r_m=parse_length(get("scenario", "range", "100")),
            all_relays_range_m=parse_length(get("scenario", "all_relays_range", "150")),
            tx_power_dbm=float(get("scenario", "tx_power_dbm", "20")),
            repeat_policy=RepeatPolicy(
                mode=get("plan", "mode", "distance_scaled"),
                fixed_count=int(get("plan", "fixed_count", "1")),
            ),
            channel=ChannelConfig(
                n_adv_channels=int(get("channel", "n_adv_channels", "3")),
                frame_duration_us=int(
                    get("channel", "frame_duration_us", str(ChannelConfig().frame_duration_us))
                ),
                adv_jitter_ms=float(
                    get("channel", "adv_jitter_ms", repr(ChannelConfig().adv_jitter_ms))
                ),
                reception_model=get("channel", "reception_model", "collision_only"),
                loss_p=float(get("channel", "loss_p", "0")),
            ),
            power=PowerProfile(
                i_tx_ma=float(get("power", "i_tx_ma", "10")),
                i_listen_ma=float(get("power", "i_listen_ma", "6")),
                i_sleep_ma=float(get("power", "i_sleep_ma", "0.003")),
            ),
            relay_budget=None if budget_text == "auto" else int(budget_text),
        )
    except PlanError:
        raise
    except ValueError as exc:
        raise PlanError(f"bad value in plan: {exc}") from None
    return plan


def relay_budget(plan: ExperimentPlan) -> int:
    """Relay-set size the sampled baselines must match."""
    if plan.relay_budget is not None:
        return plan.relay_budget
    topo = build_layout(plan.layout, plan.range_r_m)
    return len(crns_select(topo).relays)


def materialize(plan: ExperimentPlan, algorithm: str, seed: int) -> tuple[Topology, RelayAssignment]:
    """Topology plus relay assignment for one cell of the matrix."""
    range_m = plan.all_relays_range_m if algorithm == "all" else plan.range_r_m
    topo = build_layout(plan.layout, range_m)
    if algorithm == "crns":
        return topo, crns_select(topo)
    if algorithm == "all":
        return topo, all_relays(topo)
    budget = relay_budget(plan)
    if algorithm == "random":
        return topo, random_relays(topo, budget, seed=seed)
    if algorithm == "knn":
        return topo, knn_relays(topo, budget, seed=seed)
    raise PlanError(f"unknown algorithm {algorithm!r}")


def execute_cell(job) -> tuple[str, float, int, SimResult]:
    """One simulation run; module-level so worker processes can unpickle it."""
    plan, algorithm, rate, seed, emit_events = job
    topo, assignment = materialize(plan, algorithm, seed)
    config = ScenarioConfig(
        app_rate_pps=rate,
        sim_time_s=plan.sim_time_s,
        seed=seed,
        ttl=plan.ttl,
        range_r_m=topo.range_r,
        tx_power_dbm=plan.tx_power_dbm,
        repeat_policy=plan.repeat_policy,
        channel=plan.channel,
        emit_events=emit_events,
    )
    return algorithm, rate, seed, run(topo, assignment, config)


def run_matrix(
    plan: ExperimentPlan, workers: int = 1, emit_events: bool = False
) -> list[tuple[str, float, int, SimResult]]:
    """All runs of the plan, in deterministic (algorithm, rate, seed) order."""
    jobs = [
        (plan, algorithm, rate, plan.base_seed + i, emit_events)
        for algorithm in plan.algorithms
        for rate in plan.rates_pps
        for i in range(plan.n_seeds)
    ]
    if workers <= 1:
        results = [execute_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute_cell, jobs, chunksize=4))
    order = {a: i for i, a in enumerate(plan.algorithms)}
    results.sort(key=lambda item: (order[item[0]], item[1], item[2]))
    return results


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _run_name(algorithm: str, rate: float, seed: int) -> str:
    return f"{algorithm}_{rate:g}_{seed}"


_SUMMARY_FIELDS = [
    "algorithm",
    "rate_pps",
    "seed",
    "n_relays",
    "app_sent",
    "delivered",
    "pdr_pct",
    "relay_load_mean",
    "relay_load_cv",
    "net_transmissions",
    "mean_current_ma",
    "mean_relay_current_ma",
    "max_hops",
]


def write_outputs(plan: ExperimentPlan, results, out_dir, elapsed_s: float, workers: int):
    """Write the full output tree for one experiment."""
    out = Path(out_dir)
    runs_dir = out / "runs"
    plot_dir = out / "plotdata"
    runs_dir.mkdir(parents=True, exist_ok=True)
    plot_dir.mkdir(parents=True, exist_ok=True)

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SUMMARY_FIELDS)
        for algorithm, rate, seed, result in results:
            row = summarize(result, plan.power)
            writer.writerow(
                [algorithm, _fmt(rate), seed]
                + [_fmt(row[k]) for k in _SUMMARY_FIELDS[3:]]
            )

    for algorithm, rate, seed, result in results:
        name = _run_name(algorithm, rate, seed)
        write_node_csv(result, plan.power, runs_dir / f"{name}.csv")
        if result.events:
            with open(runs_dir / f"{name}_events.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["time_us", "node", "kind", "source", "packet", "channel"])
                writer.writerows(result.events)

    cells: dict[tuple[str, float], list[SimResult]] = {}
    for algorithm, rate, seed, result in results:
        cells.setdefault((algorithm, rate), []).append(result)

    def cell_mean_pdr(algorithm, rate):
        pdrs = [network_pdr(r) for r in cells[(algorithm, rate)]]
        pdrs = [p for p in pdrs if p is not None]
        return statistics.fmean(pdrs) if pdrs else None

    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["algorithm", "rate_pps", "mean_pdr_pct", "pdr_change_vs_all_pct"]
        )
        for algorithm in plan.algorithms:
            for rate in plan.rates_pps:
                mean_pdr = cell_mean_pdr(algorithm, rate)
                change = ""
                if "all" in plan.algorithms:
                    base = cell_mean_pdr("all", rate)
                    if base and mean_pdr is not None:
                        change = f"{100.0 * (mean_pdr - base) / base:+.1f}"
                writer.writerow([algorithm, _fmt(rate), _fmt(mean_pdr), change])

    with open(plot_dir / "pdr_density.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "rate_pps", "mean_pdr_pct", "stdev_pdr_pct"])
        for algorithm in plan.algorithms:
            for rate in plan.rates_pps:
                pdrs = [network_pdr(r) or 0.0 for r in cells[(algorithm, rate)]]
                writer.writerow(
                    [
                        algorithm,
                        _fmt(rate),
                        _fmt(statistics.fmean(pdrs)),
                        _fmt(statistics.pstdev(pdrs)),
                    ]
                )

    with open(plot_dir / "relay_load_hist.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "rate_pps", "bin_lo", "bin_hi", "count"])
        for algorithm in plan.algorithms:
            for rate in plan.rates_pps:
                loads = []
                for r in cells[(algorithm, rate)]:
                    loads.extend(relay_load_stats(r)["loads"])
                if not loads:
                    continue
                width = max(1, -(-(max(loads) + 1) // 10))
                counts = [0] * 10
                for load in loads:
                    counts[min(load // width, 9)] += 1
                for b, count in enumerate(counts):
                    writer.writerow(
                        [algorithm, _fmt(rate), b * width, (b + 1) * width, count]
                    )

    with open(plot_dir / "power_vs_pdr.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["algorithm", "rate_pps", "mean_relay_current_ma", "mean_pdr_pct"]
        )
        for algorithm in plan.algorithms:
            for rate in plan.rates_pps:
                currents = [
                    mean_relay_current_ma(r, plan.power)
                    for r in cells[(algorithm, rate)]
                ]
                currents = [c for c in currents if c is not None]
                writer.writerow(
                    [
                        algorithm,
                        _fmt(rate),
                        _fmt(statistics.fmean(currents) if currents else None),
                        _fmt(cell_mean_pdr(algorithm, rate)),
                    ]
                )

    metadata = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "elapsed_s": round(elapsed_s, 3),
        "version": __version__,
        "workers": workers,
        "algorithms": list(plan.algorithms),
        "rates_pps": list(plan.rates_pps),
        "seeds": list(range(plan.base_seed, plan.base_seed + plan.n_seeds)),
        "runs": len(results),
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_plan(args) -> ExperimentPlan:
    if args.config:
        plan = parse_plan(args.config)
    else:
        preset = getattr(args, "preset", None) or "paper"
        if preset not in EXPERIMENT_PRESETS:
            raise PlanError(
                f"unknown experiment preset {preset!r}; available: "
                + ", ".join(sorted(EXPERIMENT_PRESETS))
            )
        plan = EXPERIMENT_PRESETS[preset]
    if getattr(args, "seed", None) is not None:
        plan = replace(plan, base_seed=args.seed)
    return plan


def _cmd_run(args) -> int:
    plan = _load_plan(args)
    started = time.perf_counter()
    results = run_matrix(plan, workers=args.workers, emit_events=args.emit_events)
    elapsed = time.perf_counter() - started
    write_outputs(plan, results, args.out, elapsed, args.workers)
    by_cell: dict[tuple[str, float], list[float]] = {}
    for algorithm, rate, _, result in results:
        pdr = network_pdr(result)
        if pdr is not None:
            by_cell.setdefault((algorithm, rate), []).append(pdr)
    print(f"{len(results)} runs in {elapsed:.1f}s -> {args.out}")
    for (algorithm, rate), pdrs in sorted(by_cell.items()):
        print(f"  {algorithm:>6} @ {rate:g}/s: mean PDR {statistics.fmean(pdrs):.1f}%")
    return 0


def _cmd_select(args) -> int:
    if args.config:
        plan = parse_plan(args.config)
        layout, range_m = plan.layout, plan.range_r_m
    else:
        preset = args.preset or "fdot_45mph"
        if preset not in LAYOUT_PRESETS:
            print(f"unknown layout preset {preset!r}", file=sys.stderr)
            return 2
        layout, range_m = LAYOUT_PRESETS[preset], 100.0
    if args.range is not None:
        range_m = parse_length(args.range)
    topo = build_layout(layout, range_m)
    if args.algorithm == "crns":
        assignment = crns_select(topo)
    elif args.algorithm == "all":
        assignment = all_relays(topo)
    else:
        count = args.count
        if count is None:
            count = len(crns_select(topo).relays)
        if args.algorithm == "random":
            assignment = random_relays(topo, count, seed=args.seed or 0)
        else:
            assignment = knn_relays(topo, count, seed=args.seed or 0)
    issues = validate_assignment(topo, assignment)
    print(
        f"{args.algorithm}: {len(assignment.relays)} relays of "
        f"{topo.sink} barrels at range {range_m:g}m"
    )
    print("relays:", " ".join(str(r) for r in assignment.relays))
    for issue in issues:
        print("warning:", issue)
    if args.out:
        save_assignment_csv(topo, assignment, args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_validate(args) -> int:
    positions, sink, assignment = load_assignment_csv(args.assignment)
    range_m = parse_length(args.range) if args.range else 100.0
    topo = topology_from_positions(positions[:-1], positions[-1], range_m)
    issues = validate_assignment(topo, assignment)
    if issues:
        for issue in issues:
            print(issue)
        return 1
    print(
        f"ok: {len(assignment.relays)} relays cover {sink} barrels at range {range_m:g}m"
    )
    return 0


def _cmd_presets(args) -> int:
    print("layout presets:")
    for name, spec in LAYOUT_PRESETS.items():
        topo = build_layout(spec)
        segs = ", ".join(
            f"{s.name} {s.length_m:.1f}m @ {s.spacing_m:.2f}m" for s in spec.segments
        )
        print(f"  {name}: {topo.sink} barrels over {spec.total_length_m():.1f}m ({segs})")
    print("experiment presets:")
    for name, plan in EXPERIMENT_PRESETS.items():
        print(
            f"  {name}: {','.join(plan.algorithms)} x rates "
            f"{','.join(f'{r:g}' for r in plan.rates_pps)}/s x {plan.n_seeds} seeds, "
            f"{plan.sim_time_s:g}s each"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="barrelmesh",
        description="Relay selection and flooding simulation for barrel meshes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment matrix")
    p_run.add_argument("--config", help="experiment plan INI file")
    p_run.add_argument("--preset", help="experiment preset name (default: paper)")
    p_run.add_argument("--seed", type=int, help="override the base seed")
    p_run.add_argument("--workers", type=int, default=1, help="parallel processes")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument(
        "--emit-events", action="store_true", help="write per-run event traces"
    )
    p_run.set_defaults(func=_cmd_run)

    p_sel = sub.add_parser("select", help="compute a relay assignment")
    p_sel.add_argument("--config", help="experiment plan INI file")
    p_sel.add_argument("--preset", help="layout preset name (default: fdot_45mph)")
    p_sel.add_argument(
        "--algorithm", choices=ALGORITHMS, default="crns", help="selection strategy"
    )
    p_sel.add_argument("--range", help="radio range, e.g. 100m or 330ft")
    p_sel.add_argument("--count", type=int, help="relay budget for random/knn")
    p_sel.add_argument("--seed", type=int, help="sampling seed for random/knn")
    p_sel.add_argument("--out", help="write the assignment CSV here")
    p_sel.set_defaults(func=_cmd_select)

    p_val = sub.add_parser("validate", help="validate a saved assignment")
    p_val.add_argument("--assignment", required=True, help="assignment CSV to check")
    p_val.add_argument("--range", help="radio range to validate at (default 100m)")
    p_val.set_defaults(func=_cmd_validate)

    p_pre = sub.add_parser("presets", help="list shipped presets")
    p_pre.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PlanError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
