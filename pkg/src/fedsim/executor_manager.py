"""Dynamic process manager: executor slots, record table, status monitor.

Slots move Idle -> Launching -> Running -> Terminating -> Idle. A slot's
budget is fixed for the whole occupancy (process switching: a finished
client's slot is terminated and a fresh occupancy started so the next
client gets a new immutable budget). The record table keeps one FIFO
instruction queue per executor; the status monitor turns client requests
into the next instruction.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field

from .scheduler import (
    Participant,
    ScheduleEntry,
    SchedulerState,
    SCHEDULERS,
)

log = logging.getLogger(__name__)


class Lifecycle(enum.Enum):
    IDLE = "idle"
    LAUNCHING = "launching"
    RUNNING = "running"
    TERMINATING = "terminating"


class InstructionKind(enum.Enum):
    LAUNCH = "launch"
    START_TRAINING = "start_training"
    UPLOAD_MODEL = "upload_model"
    TERMINATE = "terminate"


class RequestKind(enum.Enum):
    REGISTER = "register"
    TRAINING_COMPLETE = "training_complete"
    MODEL_UPLOADED = "model_uploaded"


@dataclass(frozen=True)
class Instruction:
    kind: InstructionKind
    issued_at: float
    client_id: str
    executor_id: int
    budget: float | None = None


@dataclass(frozen=True)
class ClientRequest:
    client_id: str
    kind: RequestKind


@dataclass
class ExecutorSlot:
    executor_id: int
    lifecycle: Lifecycle = Lifecycle.IDLE
    client_id: str | None = None
    budget: float | None = None


@dataclass
class RecordTable:
    capacity: int
    rows: dict[int, deque[Instruction]] = field(default_factory=dict)

    def append(self, instr: Instruction) -> None:
        row = self.rows.setdefault(instr.executor_id, deque())
        row.append(instr)


class ExecutorManager:
    """Owns slot lifecycles and invokes the scheduler when capacity frees up.

    A single logical owner must drive this object; the engine does so from
    its event loop and the live coordinator serializes network handlers in
    front of it.
    """

    def __init__(
        self,
        max_executors: int,
        scheduler_kind: str,
        theta: float,
        dynamic_parallelism: bool = True,
        trace=None,
    ):
        self.max_executors = max_executors
        self.scheduler_fn = SCHEDULERS[scheduler_kind]
        self.theta = theta
        self.dynamic_parallelism = dynamic_parallelism
        self.trace = trace  # callable(event dict) or None
        self.slots = {i: ExecutorSlot(i) for i in range(max_executors)}
        self.record_table = RecordTable(capacity=max_executors)
        self.state = SchedulerState(
            available_executors=deque(range(max_executors))
        )
        self.pending: list[Participant] = []
        self.n_participants = 0
        self._launched: set[str] = set()

    # -- round lifecycle -------------------------------------------------

    def begin_round(self, participants: list[Participant]) -> None:
        """Reset per-round scheduler bookkeeping; participants in arrival order."""
        self.pending = list(participants)
        self.n_participants = len(participants)
        self.state.planned_count = 0
        self._launched = set()

    def kickoff(self, now: float) -> list[tuple[ScheduleEntry, Instruction]]:
        """Initial scheduling pass over all idle slots at round start."""
        if self.dynamic_parallelism:
            return self._schedule(now)
        launches = []
        idle = [s.executor_id for s in self.slots.values() if s.lifecycle is Lifecycle.IDLE]
        for executor_id in idle:
            launches.extend(self._schedule(now, only_executor=executor_id))
        return launches

    # -- status monitor --------------------------------------------------

    def on_request(self, req: ClientRequest, now: float) -> list[Instruction]:
        """Convert a client request into the next instruction for its slot."""
        slot = self._slot_of(req.client_id)
        if slot is None:
            log.warning("request %s from %s with no slot; dropped", req.kind, req.client_id)
            return []
        if req.kind is RequestKind.REGISTER:
            if slot.lifecycle is not Lifecycle.LAUNCHING:
                log.warning("register from %s in %s; dropped", req.client_id, slot.lifecycle)
                return []
            slot.lifecycle = Lifecycle.RUNNING
            return [self._issue(InstructionKind.START_TRAINING, slot, now)]
        if req.kind is RequestKind.TRAINING_COMPLETE:
            return [self._issue(InstructionKind.UPLOAD_MODEL, slot, now)]
        if req.kind is RequestKind.MODEL_UPLOADED:
            slot.lifecycle = Lifecycle.TERMINATING
            return [self._issue(InstructionKind.TERMINATE, slot, now)]
        raise AssertionError(req.kind)

    def on_slot_freed(
        self, executor_id: int, now: float
    ) -> list[tuple[ScheduleEntry, Instruction]]:
        """Terminate completed: free the slot, return the executor, reschedule."""
        slot = self.slots[executor_id]
        self.state.running_budgets.remove(slot.budget)
        slot.lifecycle = Lifecycle.IDLE
        slot.client_id = None
        slot.budget = None
        self.state.available_executors.append(executor_id)
        if self.dynamic_parallelism:
            return self._schedule(now)
        return self._schedule(now, only_executor=executor_id)

    # -- queries ---------------------------------------------------------

    def occupied_budget(self) -> float:
        """Total budget of Launching + Running slots (the vacancy baseline)."""
        return sum(
            s.budget
            for s in self.slots.values()
            if s.lifecycle in (Lifecycle.LAUNCHING, Lifecycle.RUNNING)
        )

    def all_idle(self) -> bool:
        return all(s.lifecycle is Lifecycle.IDLE for s in self.slots.values())

    # -- internals -------------------------------------------------------

    def _slot_of(self, client_id: str) -> ExecutorSlot | None:
        for slot in self.slots.values():
            if slot.client_id == client_id and slot.lifecycle is not Lifecycle.IDLE:
                return slot
        return None

    def _issue(self, kind: InstructionKind, slot: ExecutorSlot, now: float) -> Instruction:
        instr = Instruction(kind, now, slot.client_id, slot.executor_id, slot.budget)
        self.record_table.append(instr)
        if self.trace is not None:
            self.trace(
                {
                    "t": now,
                    "kind": "Instruction",
                    "client": instr.client_id,
                    "executor": instr.executor_id,
                    "instruction": kind.value,
                }
            )
        return instr

    def _schedule(
        self, now: float, only_executor: int | None = None
    ) -> list[tuple[ScheduleEntry, Instruction]]:
        if not self.pending:
            return []
        if only_executor is None:
            entries = self.scheduler_fn(
                self.state, self.pending, self.n_participants, self.theta
            )
        else:
            # fixed-parallelism baseline: offer only the just-freed executor,
            # so each freed slot launches at most one replacement client
            if only_executor not in self.state.available_executors:
                return []
            saved = self.state.available_executors
            self.state.available_executors = deque([only_executor])
            entries = self.scheduler_fn(
                self.state, self.pending, self.n_participants, self.theta
            )
            leftover = self.state.available_executors
            saved.remove(only_executor)
            saved.extend(leftover)
            self.state.available_executors = saved
        launches = []
        taken = {e.client_id for e in entries}
        self.pending = [p for p in self.pending if p.client_id not in taken]
        for entry in entries:
            slot = self.slots[entry.executor_id]
            assert slot.lifecycle is Lifecycle.IDLE
            assert entry.client_id not in self._launched, "client relaunched in round"
            self._launched.add(entry.client_id)
            slot.lifecycle = Lifecycle.LAUNCHING
            slot.client_id = entry.client_id
            slot.budget = entry.resource_budget
            launches.append(
                (entry, self._issue(InstructionKind.LAUNCH, slot, now))
            )
        return launches
