import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.cost_model import (
    CostCoefficients,
    maxmin_allocate,
    rate,
    solo_time,
    work_units,
)
from fedsim.errors import ConfigError
from fedsim.profiles import DemandPhase, WorkloadSpec

DEFAULTS = CostCoefficients()


def oracle_maxmin(caps, demands, capacity=100.0, step=0.01):
    """Independent max-min characterization: the largest feasible water level.

    The max-min fair allocation under effective caps has the form
    min(eff_i, level); grid-search the level at the given resolution.
    """
    eff = np.minimum(np.asarray(caps, dtype=float), np.asarray(demands, dtype=float))
    levels = np.arange(0.0, 100.0 + step, step)
    totals = np.minimum.outer(levels, eff).sum(axis=1)
    feasible = levels[totals <= capacity + 1e-9]
    best = feasible[-1]
    return np.minimum(eff, best)


class TestWorkUnits:
    def test_empty_workload(self):
        w = WorkloadSpec(num_samples=0)
        assert work_units(w, DEFAULTS) == 0.0

    def test_reference_value(self):
        w = WorkloadSpec(num_samples=32000, batch_size=64, model_layers=2, seq_len=128)
        assert work_units(w, DEFAULTS) == pytest.approx(17.384, abs=1e-9)

    def test_batch_size_trend(self):
        small = WorkloadSpec(num_samples=32000, batch_size=64, model_layers=2, seq_len=128)
        big = WorkloadSpec(num_samples=32000, batch_size=128, model_layers=2, seq_len=128)
        assert work_units(big, DEFAULTS) == pytest.approx(16.884, abs=1e-9)
        assert work_units(big, DEFAULTS) < work_units(small, DEFAULTS)


workloads = st.builds(
    WorkloadSpec,
    num_samples=st.integers(0, 5000),
    batch_size=st.integers(1, 256),
    model_layers=st.integers(1, 12),
    seq_len=st.integers(1, 512),
    extra_model_factor=st.floats(1.0, 4.0, allow_nan=False),
)


class TestWorkUnitTrends:
    @given(w=workloads, extra_layers=st.integers(1, 4))
    def test_increasing_in_layers(self, w, extra_layers):
        bigger = WorkloadSpec(
            w.num_samples, w.batch_size, w.model_layers + extra_layers,
            w.seq_len, w.extra_model_factor,
        )
        if w.num_samples > 0:
            assert work_units(bigger, DEFAULTS) > work_units(w, DEFAULTS)

    @given(w=workloads, extra=st.integers(1, 256))
    def test_increasing_in_seq_len(self, w, extra):
        bigger = WorkloadSpec(
            w.num_samples, w.batch_size, w.model_layers,
            w.seq_len + extra, w.extra_model_factor,
        )
        if w.num_samples > 0:
            assert work_units(bigger, DEFAULTS) > work_units(w, DEFAULTS)

    @given(w=workloads, extra_batches=st.integers(1, 20))
    def test_increasing_in_samples(self, w, extra_batches):
        # strict once at least one whole extra batch is added
        bigger = WorkloadSpec(
            w.num_samples + extra_batches * w.batch_size, w.batch_size,
            w.model_layers, w.seq_len, w.extra_model_factor,
        )
        assert work_units(bigger, DEFAULTS) > work_units(w, DEFAULTS)

    @given(w=workloads, factor=st.floats(1.1, 3.0))
    def test_increasing_in_extra_factor(self, w, factor):
        bigger = WorkloadSpec(
            w.num_samples, w.batch_size, w.model_layers,
            w.seq_len, w.extra_model_factor * factor,
        )
        if w.num_samples > 0:
            assert work_units(bigger, DEFAULTS) > work_units(w, DEFAULTS)

    @given(
        batch=st.integers(1, 64),
        mult=st.integers(2, 4),
        batches=st.integers(1, 40),
        layers=st.integers(1, 8),
        seq=st.integers(1, 256),
    )
    def test_non_increasing_in_batch_size(self, batch, mult, batches, layers, seq):
        # trend holds when both batch sizes divide the sample count; a
        # ragged final batch is charged as a full one and can break it
        n = batch * mult * batches
        small = WorkloadSpec(n, batch, layers, seq)
        big = WorkloadSpec(n, batch * mult, layers, seq)
        assert work_units(big, DEFAULTS) <= work_units(small, DEFAULTS) + 1e-12


class TestMaxminAllocate:
    def test_empty(self):
        assert maxmin_allocate([], []) == []

    def test_undersubscribed_gets_caps(self):
        assert maxmin_allocate([60, 30], [100, 100]) == [60, 30]

    def test_small_cap_freezes_first(self):
        assert maxmin_allocate([10, 80], [100, 100]) == pytest.approx([10, 80])

    def test_equal_share_below_caps(self):
        got = maxmin_allocate([80, 65, 40], [100, 100, 100])
        assert got == pytest.approx([100 / 3] * 3)

    def test_demand_limits_allocation(self):
        got = maxmin_allocate([80, 80], [20, 100])
        assert got == pytest.approx([20, 80])

    def test_matches_oracle_on_contended_case(self):
        caps, demands = [50, 40, 30], [100, 100, 100]
        got = maxmin_allocate(caps, demands)
        assert got == pytest.approx([35, 35, 30])
        assert np.allclose(got, oracle_maxmin(caps, demands), atol=0.011)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            maxmin_allocate([0], [100])
        with pytest.raises(ConfigError):
            maxmin_allocate([50], [101])
        with pytest.raises(ConfigError):
            maxmin_allocate([50, 50], [100])


@settings(max_examples=200)
@given(
    caps=st.lists(st.integers(1, 100), min_size=1, max_size=5),
    demand_seed=st.randoms(use_true_random=False),
)
def test_maxmin_matches_oracle_random(caps, demand_seed):
    demands = [demand_seed.randint(1, 100) for _ in caps]
    got = maxmin_allocate([float(c) for c in caps], [float(d) for d in demands])
    want = oracle_maxmin(caps, demands)
    assert np.allclose(got, want, atol=0.011)


@settings(max_examples=200)
@given(
    caps=st.lists(st.integers(1, 100), min_size=1, max_size=8),
)
def test_maxmin_invariants(caps):
    demands = [100.0] * len(caps)
    got = maxmin_allocate([float(c) for c in caps], demands)
    assert sum(got) <= 100 + 1e-9
    for share, cap in zip(got, caps):
        assert share <= cap + 1e-9
        assert share >= 0


@settings(max_examples=100)
@given(
    caps=st.lists(st.integers(1, 100), min_size=1, max_size=6),
    newcomer=st.integers(1, 100),
)
def test_contention_monotonicity(caps, newcomer):
    demands = [100.0] * len(caps)
    before = maxmin_allocate([float(c) for c in caps], demands)
    after = maxmin_allocate(
        [float(c) for c in caps] + [float(newcomer)], demands + [100.0]
    )
    for b, a in zip(before, after):
        assert a <= b + 1e-9


class TestRate:
    def test_full_capacity(self):
        assert rate(100) == 1.0

    def test_tenth(self):
        assert rate(10) == pytest.approx(0.1)
        assert 17.384 / rate(10) == pytest.approx(173.84)

    def test_bad_inputs(self):
        with pytest.raises(ConfigError):
            rate(0)
        with pytest.raises(ConfigError):
            rate(60, 50)


def test_solo_time_two_phase():
    phases = (DemandPhase(0.7, 90), DemandPhase(0.3, 20))
    # budget 50: first phase at 50, second at 20
    assert solo_time(50, phases, 100.0) == pytest.approx(70 / 0.5 + 30 / 0.2)
