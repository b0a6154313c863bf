"""Client schedulers: the double-pointer resource-aware policy and the greedy baseline.

Both policies pick, from the round's still-pending participants, the next
clients to launch given the budgets already running, the total budget
threshold theta, and the FIFO of idle executors. They mutate the shared
SchedulerState and return the accepted entries in acceptance order.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

_EPS = 1e-9


@dataclass(frozen=True)
class Participant:
    client_id: str
    resource_budget: float


@dataclass(frozen=True)
class ScheduleEntry:
    client_id: str
    resource_budget: float
    executor_id: int


@dataclass
class SchedulerState:
    running_budgets: list[float] = field(default_factory=list)
    planned_count: int = 0
    available_executors: deque[int] = field(default_factory=deque)

    def running_total(self) -> float:
        return sum(self.running_budgets)


def _try_accept(
    state: SchedulerState, cand: Participant, theta: float
) -> ScheduleEntry | None:
    """Condition check: enough budget headroom and an idle executor."""
    if (
        cand.resource_budget + state.running_total() <= theta + _EPS
        and state.available_executors
    ):
        executor = state.available_executors.popleft()
        state.running_budgets.append(cand.resource_budget)
        state.planned_count += 1
        return ScheduleEntry(cand.client_id, cand.resource_budget, executor)
    return None


def schedule_resource_aware(
    state: SchedulerState,
    pending: list[Participant],
    n_participants: int,
    theta: float,
) -> list[ScheduleEntry]:
    """Double-pointer selection over budget-sorted pending participants.

    Alternates the left pointer (smallest budget) with the right pointer
    (largest). A rejected left candidate ends the procedure; a rejected
    right candidate permanently disables the right pointer but the left
    keeps filling the remaining headroom.
    """
    accepted: list[ScheduleEntry] = []
    order = sorted(pending, key=lambda p: (p.resource_budget, p.client_id))
    left, right = 0, len(order) - 1
    right_enabled = True

    def guard() -> bool:
        return (
            state.planned_count < n_participants
            and state.running_total() < theta - _EPS
        )

    while guard():
        if left > right:
            break
        entry = _try_accept(state, order[left], theta)
        if entry is None:
            return accepted  # left rejection terminates
        accepted.append(entry)
        left += 1
        if not guard():
            return accepted
        if left > right:
            break
        if right_enabled:
            entry = _try_accept(state, order[right], theta)
            if entry is None:
                right_enabled = False  # right pointer stops, left continues
            else:
                accepted.append(entry)
                right -= 1
    return accepted


def schedule_greedy(
    state: SchedulerState,
    pending: list[Participant],
    n_participants: int,
    theta: float,
) -> list[ScheduleEntry]:
    """FIFO baseline: accept heads in arrival order, stop at the first misfit.

    Strict head-of-line blocking: a head that does not fit blocks every
    later (possibly smaller) participant.
    """
    accepted: list[ScheduleEntry] = []
    i = 0
    while (
        i < len(pending)
        and state.planned_count < n_participants
        and state.running_total() < theta - _EPS
    ):
        entry = _try_accept(state, pending[i], theta)
        if entry is None:
            break
        accepted.append(entry)
        i += 1
    return accepted


SCHEDULERS = {
    "resource-aware": schedule_resource_aware,
    "greedy": schedule_greedy,
}
