"""Deterministic discrete-event simulation of global rounds.

Between events every running client progresses at a constant rate given by
the capped max-min allocation over the running set; launches, phase
changes, and completions trigger re-allocation. Event ties are broken by
(kind rank, client id) so traces are byte-for-byte reproducible.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import fl_core
from .cost_model import CAPACITY, CostCoefficients, maxmin_allocate, work_units
from .errors import ConfigError
from .executor_manager import ClientRequest, ExecutorManager, RequestKind
from .metrics import KIND_RANK, RoundReport, build_round_report
from .profiles import ClientProfile, FleetConfig
from .scheduler import Participant

_EPS_WORK = 1e-9
_EPS_TIME = 1e-12

# timer kinds, processed in KIND_RANK order of the event they produce
_TIMER_RANK = {
    "start": KIND_RANK["ClientLaunched"],
    "upload_done": KIND_RANK["ModelUploaded"],
    "slot_freed": KIND_RANK["SlotFreed"],
}


@dataclass
class RunningClient:
    client_id: str
    profile: ClientProfile
    phase_work: list[float]
    phase_idx: int = 0
    assigned: float = 0.0

    def remaining(self) -> float:
        return self.phase_work[self.phase_idx]

    def demand(self) -> float:
        return self.profile.demand_profile[self.phase_idx].demand


def run_round(
    fleet: dict[str, ClientProfile],
    participant_ids: list[str],
    cfg: FleetConfig,
    t0: float = 0.0,
    trace: list[dict] | None = None,
    round_index: int = 0,
) -> tuple[RoundReport, list[dict]]:
    """Simulate one global round; participant order is the greedy arrival order."""
    missing = [cid for cid in participant_ids if cid not in fleet]
    if missing:
        raise ConfigError(f"participants not in fleet: {missing}")
    too_big = [
        cid for cid in participant_ids if fleet[cid].resource_budget > cfg.theta
    ]
    if too_big:
        raise ConfigError(
            f"clients {too_big} have budgets above theta={cfg.theta} and can never launch"
        )
    coeffs = CostCoefficients(cfg.alpha, cfg.beta)
    total_work = {
        cid: work_units(fleet[cid].workload, coeffs) for cid in participant_ids
    }

    events: list[dict] = [] if trace is None else trace
    seg_start = len(events)

    def emit(**kw):
        events.append(kw)

    mgr = ExecutorManager(
        cfg.max_executors,
        cfg.scheduler_kind,
        cfg.theta,
        cfg.dynamic_parallelism,
        trace=events.append,
    )
    mgr.begin_round(
        [Participant(cid, float(fleet[cid].resource_budget)) for cid in participant_ids]
    )

    running: dict[str, RunningClient] = {}
    timers: list[tuple[float, int, str, str, int]] = []  # (time, rank, cid, kind, exec)
    executor_of: dict[str, int] = {}
    t = t0

    def add_timer(time: float, kind: str, cid: str, executor: int):
        heapq.heappush(timers, (time, _TIMER_RANK[kind], cid, kind, executor))

    def handle_launches(launches, now: float):
        for entry, _instr in launches:
            executor_of[entry.client_id] = entry.executor_id
            emit(
                t=now,
                kind="ClientLaunched",
                client=entry.client_id,
                executor=entry.executor_id,
                budget=entry.resource_budget,
            )
            add_timer(now + cfg.launch_latency, "start", entry.client_id, entry.executor_id)

    def handle_training_complete(cid: str, now: float):
        executor = executor_of[cid]
        emit(
            t=now,
            kind="ClientTrainingComplete",
            client=cid,
            executor=executor,
            budget=float(fleet[cid].resource_budget),
        )
        mgr.on_request(ClientRequest(cid, RequestKind.TRAINING_COMPLETE), now)
        add_timer(now + cfg.upload_latency, "upload_done", cid, executor)

    def handle_timer(kind: str, cid: str, executor: int, now: float):
        if kind == "start":
            mgr.on_request(ClientRequest(cid, RequestKind.REGISTER), now)
            profile = fleet[cid]
            work = total_work[cid]
            if work <= _EPS_WORK:
                handle_training_complete(cid, now)
                return
            running[cid] = RunningClient(
                client_id=cid,
                profile=profile,
                phase_work=[p.work_fraction * work for p in profile.demand_profile],
            )
        elif kind == "upload_done":
            emit(
                t=now,
                kind="ModelUploaded",
                client=cid,
                executor=executor,
                budget=float(fleet[cid].resource_budget),
            )
            mgr.on_request(ClientRequest(cid, RequestKind.MODEL_UPLOADED), now)
            add_timer(now + cfg.terminate_latency, "slot_freed", cid, executor)
        elif kind == "slot_freed":
            emit(t=now, kind="SlotFreed", client=cid, executor=executor)
            handle_launches(mgr.on_slot_freed(executor, now), now)
        else:
            raise AssertionError(kind)

    def drain(now: float):
        """Process everything due at the current instant until stable."""
        while True:
            due: list[tuple[int, str, str, int]] = []
            while timers and timers[0][0] <= now + _EPS_TIME:
                _, rank, cid, kind, executor = heapq.heappop(timers)
                due.append((rank, cid, kind, executor))
            for rc in list(running.values()):
                if rc.remaining() <= _EPS_WORK:
                    if rc.phase_idx + 1 < len(rc.phase_work):
                        rank = KIND_RANK["PhaseCompleted"]
                    else:
                        rank = KIND_RANK["ClientTrainingComplete"]
                    due.append((rank, rc.client_id, "work_done", executor_of[rc.client_id]))
            if not due:
                return
            due.sort(key=lambda item: (item[0], item[1]))
            for _, cid, kind, executor in due:
                if kind == "work_done":
                    rc = running[cid]
                    if rc.phase_idx + 1 < len(rc.phase_work):
                        rc.phase_idx += 1
                        emit(
                            t=now,
                            kind="PhaseCompleted",
                            client=cid,
                            executor=executor,
                            phase=rc.phase_idx,
                        )
                    else:
                        del running[cid]
                        handle_training_complete(cid, now)
                else:
                    handle_timer(kind, cid, executor, now)

    handle_launches(mgr.kickoff(t), t)
    last_alloc: dict[str, float] | None = None
    while True:
        drain(t)
        if not running and not timers:
            break
        # piecewise-constant rates until the next event
        order = sorted(running)
        shares = maxmin_allocate(
            [float(running[c].profile.resource_budget) for c in order],
            [running[c].demand() for c in order],
        )
        alloc = dict(zip(order, shares))
        for cid, share in alloc.items():
            running[cid].assigned = share
        if alloc != last_alloc:
            emit(t=t, kind="Alloc", alloc=alloc)
            last_alloc = dict(alloc)
        assert mgr.occupied_budget() <= cfg.theta + 1e-6
        dt_work = min(
            (rc.remaining() / (rc.assigned / CAPACITY) for rc in running.values()),
            default=float("inf"),
        )
        dt_timer = timers[0][0] - t if timers else float("inf")
        dt = min(dt_work, dt_timer)
        if dt == float("inf"):
            raise RuntimeError("simulation stalled with work outstanding")
        if dt > 0:
            for rc in running.values():
                rc.phase_work[rc.phase_idx] -= rc.assigned / CAPACITY * dt
                if rc.phase_work[rc.phase_idx] < _EPS_WORK:
                    rc.phase_work[rc.phase_idx] = 0.0
            t += dt
    if mgr.pending:
        raise RuntimeError(f"round ended with unlaunched participants: {mgr.pending}")
    if last_alloc:
        emit(t=t, kind="Alloc", alloc={})
    emit(t=t, kind="RoundComplete", round=round_index)
    segment = events[seg_start:]
    report = build_round_report(segment, round_index)
    return report, segment


@dataclass
class TrainParams:
    enabled: bool = True
    lr: float = 0.1


@dataclass
class DataParams:
    features: int = 2
    classes: int = 4
    alpha: float = 0.5


@dataclass
class ExperimentReport:
    rounds: list[RoundReport] = field(default_factory=list)
    participants: list[list[str]] = field(default_factory=list)
    accuracy_series: list[tuple[float, float]] = field(default_factory=list)
    total_time: float = 0.0
    final_params: np.ndarray | None = None

    def mean_round_time(self) -> float:
        if not self.rounds:
            return 0.0
        return sum(r.makespan for r in self.rounds) / len(self.rounds)

    def accuracy_at(self, sim_time: float) -> float:
        """Accuracy of the last aggregation at or before sim_time."""
        acc = 0.0
        for t, a in self.accuracy_series:
            if t <= sim_time:
                acc = a
            else:
                break
        return acc

    def to_json(self) -> str:
        payload = {
            "rounds": [r.to_dict() for r in self.rounds],
            "participants": self.participants,
            "accuracy_series": self.accuracy_series,
            "total_time": self.total_time,
        }
        return json.dumps(payload, sort_keys=True)


def run_experiment(
    cfg: FleetConfig,
    fleet: list[ClientProfile],
    data: DataParams | None = None,
    train: TrainParams | None = None,
    trace: list[dict] | None = None,
) -> ExperimentReport:
    """Run cfg.rounds global rounds with seeded participant selection.

    With training enabled, Sync mode aggregates all round updates via
    FedAvg at round end; async mode aggregates buffered groups of
    cfg.async_buffer updates in completion-time order (all deltas taken
    against the round-start model).
    """
    cfg.validate(fleet_size=len(fleet))
    if cfg.rounds < 1:
        raise ConfigError("rounds must be >= 1")
    data = data or DataParams()
    train = train or TrainParams(enabled=False)
    by_id = {p.client_id: p for p in fleet}
    if len(by_id) != len(fleet):
        raise ConfigError("duplicate client ids in fleet")
    ids = sorted(by_id)
    select_rng = random.Random(f"{cfg.seed}:selection")

    shards = None
    params = None
    test = None
    if train.enabled:
        n_total = sum(p.workload.num_samples for p in fleet)
        # hold out 20% on top of what the fleet consumes
        train_ds, test = fl_core.make_synthetic_dataset(
            data.features,
            data.classes,
            max(math.ceil(n_total / 0.8), 10),
            fl_core.stable_seed("data", cfg.seed),
        )
        shards = fl_core.partition_noniid(
            train_ds,
            [(p.client_id, p.workload.num_samples) for p in fleet],
            data.alpha,
            fl_core.stable_seed("partition", cfg.seed),
        )
        params = fl_core.init_params(data.features, data.classes)

    report = ExperimentReport()
    now = 0.0
    for r in range(cfg.rounds):
        participants = select_rng.sample(ids, cfg.participants_per_round)
        round_report, _segment = run_round(
            by_id, participants, cfg, t0=now, trace=trace, round_index=r
        )
        report.rounds.append(round_report)
        report.participants.append(list(participants))
        round_end = now + round_report.makespan
        if train.enabled:
            deltas, weights, ends = [], [], []
            for cid in participants:
                profile = by_id[cid]
                deltas.append(
                    fl_core.local_train(
                        params,
                        shards[cid],
                        profile.workload,
                        train.lr,
                        data.classes,
                        seed=fl_core.stable_seed("train", cfg.seed, r, cid),
                    )
                )
                weights.append(float(profile.workload.num_samples))
                ends.append(round_report.per_client_end[cid])
            if cfg.aggregation == "sync":
                params = fl_core.fedavg(deltas, weights, params)
                acc = fl_core.evaluate_accuracy(params, test)
                report.accuracy_series.append((round_end, acc))
            else:
                order = sorted(range(len(participants)), key=lambda i: (ends[i], participants[i]))
                for chunk_start in range(0, len(order), cfg.async_buffer):
                    chunk = order[chunk_start : chunk_start + cfg.async_buffer]
                    params = fl_core.fedavg(
                        [deltas[i] for i in chunk],
                        [weights[i] for i in chunk],
                        params,
                    )
                    acc = fl_core.evaluate_accuracy(params, test)
                    report.accuracy_series.append((ends[chunk[-1]], acc))
        now = round_end
    report.total_time = now
    report.final_params = params
    return report
