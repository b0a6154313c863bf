"""Resource-constrained federated learning orchestration simulator."""

from .cost_model import CostCoefficients, maxmin_allocate, rate, work_units
from .engine import (
    DataParams,
    ExperimentReport,
    TrainParams,
    run_experiment,
    run_round,
)
from .profiles import (
    ClientProfile,
    DemandPhase,
    DistributionSpec,
    FleetConfig,
    WorkloadSpec,
    case_study_fleet,
    generate_fleet,
    load_fleet,
    save_fleet,
)
from .scheduler import (
    Participant,
    ScheduleEntry,
    SchedulerState,
    schedule_greedy,
    schedule_resource_aware,
)

__all__ = [
    "ClientProfile",
    "CostCoefficients",
    "DataParams",
    "DemandPhase",
    "DistributionSpec",
    "ExperimentReport",
    "FleetConfig",
    "Participant",
    "ScheduleEntry",
    "SchedulerState",
    "TrainParams",
    "WorkloadSpec",
    "case_study_fleet",
    "generate_fleet",
    "load_fleet",
    "maxmin_allocate",
    "rate",
    "run_experiment",
    "run_round",
    "save_fleet",
    "schedule_greedy",
    "schedule_resource_aware",
    "work_units",
]
