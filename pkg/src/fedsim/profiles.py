"""Client profiles, workload specs, and fleet generation/IO.

A fleet is a list of ClientProfile. Each client carries a resource budget
(percent of the 100-unit device capacity it may ever use), a workload spec
that the cost model converts into work units, and a demand profile splitting
that work into phases with different instantaneous resource appetites.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ConfigError, FleetLoadError


@dataclass(frozen=True)
class WorkloadSpec:
    num_samples: int = 6400
    batch_size: int = 64
    model_layers: int = 2
    seq_len: int = 128
    extra_model_factor: float = 1.0

    def __post_init__(self):
        if self.num_samples < 0:
            raise ConfigError(f"num_samples must be >= 0, got {self.num_samples}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.model_layers < 1:
            raise ConfigError(f"model_layers must be >= 1, got {self.model_layers}")
        if self.seq_len < 1:
            raise ConfigError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.extra_model_factor < 1:
            raise ConfigError(
                f"extra_model_factor must be >= 1, got {self.extra_model_factor}"
            )


@dataclass(frozen=True)
class DemandPhase:
    work_fraction: float
    demand: float  # percent of physical capacity in (0, 100]

    def __post_init__(self):
        if not 0 < self.work_fraction <= 1:
            raise ConfigError(f"work_fraction must be in (0,1], got {self.work_fraction}")
        if not 0 < self.demand <= 100:
            raise ConfigError(f"demand must be in (0,100], got {self.demand}")


FULL_DEMAND = (DemandPhase(1.0, 100.0),)


@dataclass(frozen=True)
class ClientProfile:
    client_id: str
    resource_budget: int  # percent of capacity, the client's hard cap
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    demand_profile: tuple[DemandPhase, ...] = FULL_DEMAND

    def __post_init__(self):
        if not 1 <= self.resource_budget <= 100:
            raise ConfigError(
                f"resource_budget must be in [1,100], got {self.resource_budget}"
            )
        total = sum(p.work_fraction for p in self.demand_profile)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(
                f"demand_profile work fractions sum to {total}, expected 1"
            )


@dataclass
class FleetConfig:
    """Per-experiment knobs consumed by the engine."""

    theta: float = 100.0  # total resource budget threshold; > 100 enables sharing
    max_executors: int = 8
    scheduler_kind: str = "resource-aware"  # or "greedy"
    participants_per_round: int = 1
    rounds: int = 1
    aggregation: str = "sync"  # or "async"
    async_buffer: int = 4
    alpha: float = 2e-6  # cost coefficient, seconds per layer*token*sample
    beta: float = 1e-3  # cost coefficient, seconds per layer per batch
    seed: int = 1
    dynamic_parallelism: bool = True
    launch_latency: float = 0.0
    terminate_latency: float = 0.0
    upload_latency: float = 0.0

    def validate(self, fleet_size: int | None = None):
        if not 0 < self.theta <= 300:
            raise ConfigError(f"theta must be in (0,300], got {self.theta}")
        if self.max_executors < 1:
            raise ConfigError("max_executors must be >= 1")
        if self.scheduler_kind not in ("greedy", "resource-aware"):
            raise ConfigError(f"unknown scheduler: {self.scheduler_kind}")
        if self.aggregation not in ("sync", "async"):
            raise ConfigError(f"unknown aggregation: {self.aggregation}")
        if self.aggregation == "async" and self.async_buffer < 1:
            raise ConfigError("async_buffer must be >= 1")
        if self.alpha <= 0 or self.beta < 0:
            raise ConfigError("cost coefficients require alpha > 0, beta >= 0")
        if fleet_size is not None and self.participants_per_round > fleet_size:
            raise ConfigError(
                f"participants_per_round {self.participants_per_round} exceeds "
                f"fleet size {fleet_size}"
            )


def _as_choices(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class DistributionSpec:
    """Declarative fleet distribution: budgets plus workload field choices.

    Each workload field is either a constant or a list of equally likely
    choices; budgets may optionally carry categorical weights.
    """

    budget_levels: Sequence[int] = (25, 50, 75, 100)
    budget_weights: Sequence[float] | None = None
    num_samples: int | Sequence[int] = 6400
    batch_size: int | Sequence[int] = 64
    model_layers: int | Sequence[int] = 2
    seq_len: int | Sequence[int] = 128
    extra_model_factor: float | Sequence[float] = 1.0
    demand_profiles: Sequence[str] = ("",)
    demand_weights: Sequence[float] | None = None

    def validate(self):
        if not self.budget_levels:
            raise ConfigError("budget_levels must be non-empty")
        for w, support in (
            (self.budget_weights, self.budget_levels),
            (self.demand_weights, self.demand_profiles),
        ):
            if w is not None:
                if len(w) != len(support):
                    raise ConfigError("weights length must match support length")
                if any(x < 0 for x in w):
                    raise ConfigError("weights must be non-negative")
                if abs(sum(w) - 1.0) > 1e-9:
                    raise ConfigError(f"weights sum to {sum(w)}, expected 1")
        for b in self.budget_levels:
            if not 1 <= b <= 100:
                raise ConfigError(f"budget level {b} outside [1,100]")


def parse_demand_profile(text: str) -> tuple[DemandPhase, ...]:
    """Parse 'frac:demand[;frac:demand]*' (empty means single 100% phase)."""
    text = text.strip()
    if not text:
        return FULL_DEMAND
    phases = []
    for part in text.split(";"):
        frac, _, demand = part.partition(":")
        try:
            phases.append(DemandPhase(float(frac), float(demand)))
        except ValueError as e:
            raise ConfigError(f"bad demand phase {part!r}: {e}") from e
    return tuple(phases)


def format_demand_profile(profile: tuple[DemandPhase, ...]) -> str:
    if profile == FULL_DEMAND:
        return ""
    return ";".join(f"{p.work_fraction:g}:{p.demand:g}" for p in profile)


def generate_fleet(dist: DistributionSpec, n: int, seed: int) -> list[ClientProfile]:
    """Draw n client profiles from the distribution, deterministically per seed."""
    if n < 0:
        raise ConfigError(f"fleet size must be >= 0, got {n}")
    dist.validate()
    rng = random.Random(f"fleet:{seed}")
    width = max(4, len(str(max(n - 1, 0))))
    fleet = []
    for i in range(n):
        budget = rng.choices(list(dist.budget_levels), weights=dist.budget_weights)[0]
        workload = WorkloadSpec(
            num_samples=rng.choice(_as_choices(dist.num_samples)),
            batch_size=rng.choice(_as_choices(dist.batch_size)),
            model_layers=rng.choice(_as_choices(dist.model_layers)),
            seq_len=rng.choice(_as_choices(dist.seq_len)),
            extra_model_factor=rng.choice(_as_choices(dist.extra_model_factor)),
        )
        demand = rng.choices(
            list(dist.demand_profiles), weights=dist.demand_weights
        )[0]
        fleet.append(
            ClientProfile(
                client_id=f"c{i:0{width}d}",
                resource_budget=int(budget),
                workload=workload,
                demand_profile=parse_demand_profile(demand),
            )
        )
    return fleet


#: Budgets of the 8-client scheduling case study, clients A through H.
CASE_STUDY_BUDGETS = (10, 15, 30, 80, 65, 40, 50, 10)


def case_study_fleet(workload: WorkloadSpec | None = None) -> list[ClientProfile]:
    """The 8-client fleet (A..H) used in the scheduling case study."""
    workload = workload or WorkloadSpec()
    return [
        ClientProfile(client_id=chr(ord("A") + i), resource_budget=b, workload=workload)
        for i, b in enumerate(CASE_STUDY_BUDGETS)
    ]


FLEET_CSV_HEADER = [
    "client_id",
    "budget",
    "num_samples",
    "batch_size",
    "layers",
    "seq_len",
    "extra_factor",
    "demand_profile",
]


def save_fleet(fleet: list[ClientProfile], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(FLEET_CSV_HEADER)
        for p in fleet:
            w = p.workload
            writer.writerow(
                [
                    p.client_id,
                    p.resource_budget,
                    w.num_samples,
                    w.batch_size,
                    w.model_layers,
                    w.seq_len,
                    f"{w.extra_model_factor:g}",
                    format_demand_profile(p.demand_profile),
                ]
            )


def load_fleet(path) -> list[ClientProfile]:
    """Load a fleet CSV, enforcing all profile invariants row by row."""
    fleet = []
    seen = set()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != FLEET_CSV_HEADER:
            raise FleetLoadError(f"unexpected header {header!r} in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(FLEET_CSV_HEADER):
                raise FleetLoadError(f"{path}:{lineno}: expected 8 fields, got {len(row)}")
            try:
                profile = ClientProfile(
                    client_id=row[0],
                    resource_budget=int(row[1]),
                    workload=WorkloadSpec(
                        num_samples=int(row[2]),
                        batch_size=int(row[3]),
                        model_layers=int(row[4]),
                        seq_len=int(row[5]),
                        extra_model_factor=float(row[6]),
                    ),
                    demand_profile=parse_demand_profile(row[7]),
                )
            except (ValueError, ConfigError) as e:
                raise FleetLoadError(f"{path}:{lineno}: {e}") from e
            if profile.client_id in seen:
                raise FleetLoadError(
                    f"{path}:{lineno}: duplicate client_id {profile.client_id!r}"
                )
            seen.add(profile.client_id)
            fleet.append(profile)
    return fleet
