import pytest

from fedsim.engine import run_round
from fedsim.errors import TraceError
from fedsim.metrics import (
    KIND_RANK,
    build_round_report,
    read_trace_jsonl,
    utilization,
    vacancy_area,
    write_trace_jsonl,
)
from fedsim.profiles import ClientProfile, FleetConfig, WorkloadSpec


def hand_trace():
    """One client, budget 40, running 0..10s at its full cap."""
    return [
        {"t": 0.0, "kind": "ClientLaunched", "client": "a", "executor": 0, "budget": 40.0},
        {"t": 0.0, "kind": "Alloc", "alloc": {"a": 40.0}},
        {"t": 10.0, "kind": "ClientTrainingComplete", "client": "a", "executor": 0, "budget": 40.0},
        {"t": 10.0, "kind": "ModelUploaded", "client": "a", "executor": 0, "budget": 40.0},
        {"t": 10.0, "kind": "Alloc", "alloc": {}},
        {"t": 10.0, "kind": "SlotFreed", "client": "a", "executor": 0},
        {"t": 10.0, "kind": "RoundComplete", "round": 0},
    ]


class TestHandTrace:
    def test_vacancy_is_unreserved_area(self):
        # 60 unreserved units for 10 seconds
        assert vacancy_area(hand_trace()) == pytest.approx(600.0)

    def test_utilization_is_assigned_share(self):
        assert utilization(hand_trace()) == pytest.approx(0.4)

    def test_report_fields(self):
        report = build_round_report(hand_trace())
        assert report.makespan == pytest.approx(10.0)
        assert report.throughput == pytest.approx(0.1)
        assert report.per_client_times == {"a": 10.0}
        assert report.per_client_budget == {"a": 40.0}
        assert report.parallelism_timeline[0] == (0.0, 0)
        assert max(n for _, n in report.parallelism_timeline) == 1

    def test_full_budget_zero_vacancy(self):
        trace = hand_trace()
        for e in trace:
            if "budget" in e:
                e["budget"] = 100.0
        assert vacancy_area(trace) == pytest.approx(0.0)


class TestBounds:
    def test_empty_trace_rejected(self):
        with pytest.raises(TraceError):
            build_round_report([])

    def test_missing_round_complete_rejected(self):
        with pytest.raises(TraceError):
            build_round_report(hand_trace()[:-1])

    def test_degenerate_round(self):
        report = build_round_report([{"t": 5.0, "kind": "RoundComplete", "round": 0}])
        assert report.degenerate
        assert report.makespan == 0.0
        assert report.utilization == 0.0


def test_kind_rank_orders_completion_before_reschedule():
    assert KIND_RANK["ClientLaunched"] < KIND_RANK["PhaseCompleted"]
    assert KIND_RANK["ModelUploaded"] < KIND_RANK["SlotFreed"]
    assert KIND_RANK["SlotFreed"] < KIND_RANK["RoundComplete"]


def test_jsonl_round_trip_preserves_report(tmp_path):
    fleet = {
        f"c{i}": ClientProfile(f"c{i}", b, WorkloadSpec(1, 1, 1, 1))
        for i, b in enumerate([50, 40, 30, 10])
    }
    cfg = FleetConfig(alpha=5.0, beta=0.0, max_executors=8)
    report, trace = run_round(fleet, sorted(fleet), cfg)
    path = tmp_path / "trace.jsonl"
    write_trace_jsonl(trace, path)
    replayed = build_round_report(read_trace_jsonl(path))
    assert replayed.makespan == report.makespan
    assert replayed.utilization == report.utilization
    assert replayed.vacancy_area == report.vacancy_area
    assert replayed.per_client_times == report.per_client_times
    assert replayed.parallelism_timeline == report.parallelism_timeline
