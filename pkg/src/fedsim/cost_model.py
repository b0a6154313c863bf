"""Parametric cost model: work units, progress rates, capped max-min allocation.

The device exposes 100 units of capacity. A client's hard cap is its
resource budget; its instantaneous appetite is the demand of its current
phase. Concurrent clients share capacity by progressive filling (water
filling) up to min(budget, demand), which is the max-min fair allocation
under those caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .profiles import WorkloadSpec

CAPACITY = 100.0


@dataclass(frozen=True)
class CostCoefficients:
    alpha: float = 2e-6  # seconds per (layer x token x sample) at full capacity
    beta: float = 1e-3  # seconds per layer per batch at full capacity

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")


def work_units(w: WorkloadSpec, c: CostCoefficients) -> float:
    """Total work in seconds-at-full-capacity for one local training pass.

    Per-batch cost scales with layers * seq_len * batch_size plus a fixed
    per-batch per-layer overhead; the whole pass scales with the extra
    model factor.
    """
    batches = math.ceil(w.num_samples / w.batch_size)
    per_batch = (
        c.alpha * w.model_layers * w.seq_len * w.batch_size
        + c.beta * w.model_layers
    )
    return batches * per_batch * w.extra_model_factor


def maxmin_allocate(
    caps: list[float], demands: list[float], capacity: float = CAPACITY
) -> list[float]:
    """Water-filling allocation with per-client effective cap min(cap, demand).

    Raises every unfrozen client's share uniformly, freezing a client when
    it reaches its effective cap, until capacity runs out or everyone is
    frozen. Empty input yields an empty allocation.
    """
    if len(caps) != len(demands):
        raise ConfigError("caps and demands must have equal length")
    n = len(caps)
    if n == 0:
        return []
    for i in range(n):
        if not 0 < caps[i] <= 100:
            raise ConfigError(f"cap {caps[i]} outside (0,100]")
        if not 0 < demands[i] <= 100:
            raise ConfigError(f"demand {demands[i]} outside (0,100]")
    eff = [min(caps[i], demands[i]) for i in range(n)]
    alloc = [0.0] * n
    active = list(range(n))
    remaining = capacity
    level = 0.0
    while active and remaining > 1e-12:
        headroom = min(eff[i] - level for i in active)
        step = remaining / len(active)
        if headroom <= step:
            # at least one client freezes at its effective cap
            level += headroom
            remaining -= headroom * len(active)
            for i in active:
                alloc[i] = min(eff[i], level)
            active = [i for i in active if eff[i] - level > 1e-12]
        else:
            level += step
            for i in active:
                alloc[i] = level
            remaining = 0.0
    return alloc


def rate(assigned: float, demand: float = CAPACITY) -> float:
    """Progress in work units per second under an assigned share."""
    if not 0 < assigned <= demand <= 100:
        raise ConfigError(f"need 0 < assigned <= demand <= 100, got {assigned}, {demand}")
    return assigned / CAPACITY


def solo_time(budget: float, demand_profile, total_work: float) -> float:
    """Wall-clock for a client running alone: each phase at min(budget, demand)."""
    return sum(
        p.work_fraction * total_work / rate(min(budget, p.demand))
        for p in demand_profile
    )
