"""Trace analysis: makespan, utilization, vacancy area, throughput, timelines.

All metrics are pure functions of the event trace (a list of event dicts,
one per line in the emitted JSONL), so reports can be recomputed offline
from trace files and must match the engine's in-memory numbers exactly.

Vacancy integrates occupied BUDGETS (what the scheduler reserved) against
the 100 line; utilization integrates ASSIGNED allocations, so intra-budget
idleness and sharing gains show up in utilization but not in vacancy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cost_model import CAPACITY
from .errors import TraceError

#: deterministic processing order for simultaneous events
KIND_RANK = {
    "ClientLaunched": 0,
    "PhaseCompleted": 1,
    "ClientTrainingComplete": 2,
    "ModelUploaded": 3,
    "SlotFreed": 4,
    "RoundComplete": 5,
}


@dataclass
class RoundReport:
    round_index: int
    makespan: float
    utilization: float
    vacancy_area: float
    throughput: float
    parallelism_timeline: list[tuple[float, int]]
    per_client_times: dict[str, float]
    per_client_start: dict[str, float] = field(default_factory=dict)
    per_client_end: dict[str, float] = field(default_factory=dict)
    per_client_budget: dict[str, float] = field(default_factory=dict)
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "makespan_s": self.makespan,
            "utilization": self.utilization,
            "vacancy_area": self.vacancy_area,
            "throughput": self.throughput,
            "n_clients": len(self.per_client_times),
        }


def _round_bounds(trace: list[dict]) -> tuple[float, float]:
    """Round start and makespan end (last model upload, per sync semantics)."""
    if not trace:
        raise TraceError("empty trace")
    if not any(e["kind"] == "RoundComplete" for e in trace):
        raise TraceError("trace has no RoundComplete event")
    uploads = [e["t"] for e in trace if e["kind"] == "ModelUploaded"]
    if uploads:
        return trace[0]["t"], max(uploads)
    end = next(e["t"] for e in trace if e["kind"] == "RoundComplete")
    return trace[0]["t"], end


def budget_timeline(trace: list[dict]) -> list[tuple[float, float]]:
    """Step function of time -> total occupied budget (Launching + Running)."""
    start, end = _round_bounds(trace)
    points: list[tuple[float, float]] = [(start, 0.0)]
    total = 0.0
    for e in trace:
        if e["kind"] == "ClientLaunched":
            total += e["budget"]
        elif e["kind"] == "ModelUploaded":
            total -= e["budget"]
        else:
            continue
        points.append((e["t"], total))
    points.append((end, total))
    return points


def vacancy_area(trace: list[dict]) -> float:
    """Integral of max(0, 100 - occupied budget) over the round."""
    timeline = budget_timeline(trace)
    area = 0.0
    for (t0, v), (t1, _) in zip(timeline, timeline[1:]):
        area += max(0.0, CAPACITY - v) * (t1 - t0)
    return area


def utilization(trace: list[dict]) -> float:
    """Integral of assigned allocation over 100 x makespan; 0 if degenerate."""
    start, end = _round_bounds(trace)
    makespan = end - start
    if makespan <= 0:
        return 0.0
    area = 0.0
    prev_t, prev_total = start, 0.0
    for e in trace:
        if e["kind"] != "Alloc":
            continue
        area += prev_total * (e["t"] - prev_t)
        prev_t, prev_total = e["t"], sum(e["alloc"].values())
    area += prev_total * (end - prev_t)
    return area / (CAPACITY * makespan)


def parallelism_timeline(trace: list[dict]) -> list[tuple[float, int]]:
    """Step function of time -> number of occupied (launched, not yet uploaded) slots."""
    start, end = _round_bounds(trace)
    points = [(start, 0)]
    count = 0
    for e in trace:
        if e["kind"] == "ClientLaunched":
            count += 1
        elif e["kind"] == "ModelUploaded":
            count -= 1
        else:
            continue
        points.append((e["t"], count))
    points.append((end, count))
    return points


def per_client_times(trace: list[dict]) -> tuple[dict, dict, dict, dict]:
    starts: dict[str, float] = {}
    ends: dict[str, float] = {}
    budgets: dict[str, float] = {}
    for e in trace:
        if e["kind"] == "ClientLaunched":
            starts[e["client"]] = e["t"]
            budgets[e["client"]] = e["budget"]
        elif e["kind"] == "ModelUploaded":
            ends[e["client"]] = e["t"]
    walls = {c: ends[c] - starts[c] for c in ends}
    return walls, starts, ends, budgets


def throughput(trace: list[dict]) -> float:
    start, end = _round_bounds(trace)
    completed = sum(1 for e in trace if e["kind"] == "ModelUploaded")
    if completed == 0 or end <= start:
        return 0.0
    return completed / (end - start)


def build_round_report(trace: list[dict], round_index: int = 0) -> RoundReport:
    start, end = _round_bounds(trace)
    walls, starts, ends, budgets = per_client_times(trace)
    makespan = end - start
    return RoundReport(
        round_index=round_index,
        makespan=makespan,
        utilization=utilization(trace),
        vacancy_area=vacancy_area(trace),
        throughput=throughput(trace),
        parallelism_timeline=parallelism_timeline(trace),
        per_client_times=walls,
        per_client_start=starts,
        per_client_end=ends,
        per_client_budget=budgets,
        degenerate=makespan <= 0,
    )


def write_trace_jsonl(trace: list[dict], path) -> None:
    with open(path, "w") as f:
        for e in trace:
            f.write(json.dumps(e, sort_keys=True) + "\n")


def read_trace_jsonl(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
