"""Command-line entry point: simulate, compare, ablation, sweep, serve, worker."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .comms import coordinator_serve, worker_run
from .config import ExperimentConfig, load_config
from .engine import ExperimentReport, run_experiment
from .errors import ConfigError, FleetLoadError
from .metrics import budget_timeline, write_trace_jsonl
from .profiles import save_fleet

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

#: the ablation ladder: progressively enable manager, scheduler, and sharing
ABLATION_LADDER = [
    ("B1", {"scheduler_kind": "greedy", "dynamic_parallelism": False, "sharing": False}),
    ("B2", {"scheduler_kind": "greedy", "dynamic_parallelism": True, "sharing": False}),
    ("B3", {"scheduler_kind": "resource-aware", "dynamic_parallelism": True, "sharing": False}),
    ("B4", {"scheduler_kind": "resource-aware", "dynamic_parallelism": True, "sharing": True}),
]


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(os.environ.get("FEDSIM_OUT", cfg.output_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rounds_csv(path: Path, report: ExperimentReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["round", "makespan_s", "utilization", "vacancy_area", "throughput", "n_clients"]
        )
        for r in report.rounds:
            d = r.to_dict()
            writer.writerow(
                [
                    d["round"],
                    f"{d['makespan_s']:.9g}",
                    f"{d['utilization']:.9g}",
                    f"{d['vacancy_area']:.9g}",
                    f"{d['throughput']:.9g}",
                    d["n_clients"],
                ]
            )


def _write_clients_csv(path: Path, report: ExperimentReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "client_id", "budget", "start_s", "end_s", "wall_clock_s"])
        for r in report.rounds:
            for cid in sorted(r.per_client_times):
                writer.writerow(
                    [
                        r.round_index,
                        cid,
                        f"{r.per_client_budget[cid]:.9g}",
                        f"{r.per_client_start[cid]:.9g}",
                        f"{r.per_client_end[cid]:.9g}",
                        f"{r.per_client_times[cid]:.9g}",
                    ]
                )


def _write_summary(path: Path, cfg: ExperimentConfig, report: ExperimentReport) -> None:
    payload = {
        "config": cfg.resolved(),
        "rounds": [r.to_dict() for r in report.rounds],
        "participants": report.participants,
        "accuracy_series": report.accuracy_series,
        "total_time": report.total_time,
        "mean_round_time": report.mean_round_time(),
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    fleet = cfg.build_fleet()
    trace: list[dict] = []
    report = run_experiment(cfg.fleet_config, fleet, cfg.data, cfg.train, trace=trace)
    out = _out_dir(cfg)
    write_trace_jsonl(trace, out / "trace.jsonl")
    _write_rounds_csv(out / "rounds.csv", report)
    _write_clients_csv(out / "clients.csv", report)
    _write_summary(out / "summary.json", cfg, report)
    save_fleet(fleet, out / "fleet.csv")
    print(f"simulate: {cfg.fleet_config.rounds} rounds -> {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config, args.set)
    for s in args.schedulers:
        if s not in ("greedy", "resource-aware"):
            raise ConfigError(f"unknown scheduler: {s}")
    fleet = cfg.build_fleet()
    out = _out_dir(cfg)
    rows = []
    for sched in args.schedulers:
        cfg.fleet_config.scheduler_kind = sched
        trace: list[dict] = []
        report = run_experiment(
            cfg.fleet_config, fleet, cfg.data, cfg.train, trace=trace
        )
        n = len(report.rounds)
        rows.append(
            [
                sched,
                sum(r.makespan for r in report.rounds) / n,
                sum(r.vacancy_area for r in report.rounds) / n,
                sum(r.utilization for r in report.rounds) / n,
            ]
        )
        first_round = []
        for e in trace:
            first_round.append(e)
            if e["kind"] == "RoundComplete":
                break
        with open(out / f"timeline_{sched}.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "total_budget"])
            for t, total in budget_timeline(first_round):
                writer.writerow([f"{t:.9g}", f"{total:.9g}"])
    with open(out / "compare.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["scheduler", "makespan_s", "vacancy_area", "utilization"])
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.9g}" for v in row[1:]])
    for row in rows:
        print(f"compare: {row[0]} makespan={row[1]:.3f}s vacancy={row[2]:.1f}")
    return EXIT_OK


def cmd_ablation(args) -> int:
    cfg = load_config(args.config, args.set)
    fleet = cfg.build_fleet()
    out = _out_dir(cfg)
    base_theta = min(cfg.fleet_config.theta, 100.0)
    rows = []
    for name, knobs in ABLATION_LADDER:
        for n_participants in args.participants:
            fc = cfg.fleet_config
            fc.scheduler_kind = knobs["scheduler_kind"]
            fc.dynamic_parallelism = knobs["dynamic_parallelism"]
            fc.theta = args.sharing_theta if knobs["sharing"] else base_theta
            fc.participants_per_round = n_participants
            report = run_experiment(fc, fleet, cfg.data, train=None)
            rows.append([name, n_participants, report.mean_round_time()])
    with open(out / "ablation.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["config", "participants", "mean_round_s"])
        for name, n_participants, mean_t in rows:
            writer.writerow([name, n_participants, f"{mean_t:.9g}"])
    for name, n_participants, mean_t in rows:
        print(f"ablation: {name} N={n_participants} mean_round={mean_t:.3f}s")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    out = None
    for value in args.values:
        overrides = list(args.set) + [f"{args.key}={value}"]
        cfg = load_config(args.config, overrides)
        fleet = cfg.build_fleet()
        if out is None:
            out = _out_dir(cfg)
        report = run_experiment(cfg.fleet_config, fleet, cfg.data, train=None)
        n = len(report.rounds)
        rows.append(
            [
                value,
                report.mean_round_time(),
                sum(r.utilization for r in report.rounds) / n,
                sum(r.vacancy_area for r in report.rounds) / n,
                sum(r.throughput for r in report.rounds) / n,
            ]
        )
    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["key", "value", "mean_round_s", "mean_utilization", "mean_vacancy", "mean_throughput"]
        )
        for row in rows:
            writer.writerow([args.key, row[0]] + [f"{v:.9g}" for v in row[1:]])
    for row in rows:
        print(f"sweep: {args.key}={row[0]} mean_round={row[1]:.3f}s")
    return EXIT_OK


def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def cmd_serve(args) -> int:
    cfg = load_config(args.config, args.set)
    fleet = cfg.build_fleet()
    report, coordinator = coordinator_serve(
        cfg.fleet_config,
        fleet,
        _parse_address(args.bind),
        workers_expected=args.workers_expected,
        time_dilation=args.time_dilation,
        data=cfg.data,
        train=cfg.train,
    )
    out = _out_dir(cfg)
    write_trace_jsonl(coordinator.wall_trace, out / "trace_wall.jsonl")
    _write_summary(out / "summary.json", cfg, report)
    print(f"serve: {len(report.participants)} rounds, wall {report.total_time:.3f}s -> {out}")
    return EXIT_OK if not coordinator.round_failed else EXIT_RUNTIME


def cmd_worker(args) -> int:
    return worker_run(_parse_address(args.connect))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsim",
        description="Resource-constrained federated learning orchestration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="experiment configuration file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a configuration key, e.g. --set scheduler=greedy",
        )

    p = sub.add_parser("simulate", help="run one experiment and emit reports")
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run the same fleet under several schedulers")
    add_common(p)
    p.add_argument(
        "--schedulers",
        nargs="+",
        default=["greedy", "resource-aware"],
    )
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablation", help="run the B1..B4 component ladder")
    add_common(p)
    p.add_argument("--participants", nargs="+", type=int, default=[3, 10, 100])
    p.add_argument("--sharing-theta", type=float, default=150.0)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("sweep", help="repeat the experiment varying one key")
    add_common(p)
    p.add_argument("--key", required=True)
    p.add_argument("--values", nargs="*", default=[])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="run the live-mode coordinator")
    add_common(p)
    p.add_argument("--bind", default="127.0.0.1:0")
    p.add_argument("--workers-expected", type=int, required=True)
    p.add_argument("--time-dilation", type=float, default=0.001)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("worker", help="run a live-mode worker")
    p.add_argument("--connect", required=True)
    p.set_defaults(func=cmd_worker)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FleetLoadError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
