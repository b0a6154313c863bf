import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.errors import AggregationError
from fedsim.fl_core import (
    Dataset,
    DatasetShard,
    evaluate_accuracy,
    fedavg,
    init_params,
    local_train,
    loss_and_grad,
    make_synthetic_dataset,
    partition_noniid,
    stable_seed,
)
from fedsim.profiles import WorkloadSpec


def finite_difference_grad(params, features, labels, n_classes, eps=1e-6):
    """Central-difference gradient oracle for the cross-entropy loss."""
    grad = np.zeros_like(params)
    for i in range(len(params)):
        up = params.copy()
        up[i] += eps
        down = params.copy()
        down[i] -= eps
        lu, _ = loss_and_grad(up, features, labels, n_classes)
        ld, _ = loss_and_grad(down, features, labels, n_classes)
        grad[i] = (lu - ld) / (2 * eps)
    return grad


class TestStableSeed:
    def test_deterministic_across_calls(self):
        assert stable_seed("train", 1, 0, "A") == stable_seed("train", 1, 0, "A")

    def test_distinct_parts_distinct_seeds(self):
        seeds = {stable_seed("train", s, r, c) for s in range(3) for r in range(3) for c in "AB"}
        assert len(seeds) == 18

    def test_fits_32_bits(self):
        assert 0 <= stable_seed("x") < 2**32


class TestSyntheticDataset:
    def test_deterministic(self):
        a_train, a_test = make_synthetic_dataset(4, 3, 1000, seed=7)
        b_train, b_test = make_synthetic_dataset(4, 3, 1000, seed=7)
        assert np.array_equal(a_train.features, b_train.features)
        assert np.array_equal(a_test.labels, b_test.labels)

    def test_split_sizes(self):
        train, test = make_synthetic_dataset(2, 4, 1000, seed=1)
        assert len(test.labels) == 200
        assert len(train.labels) == 800

    def test_clusters_are_separable(self):
        # widely spread means: a trained model should beat chance easily
        train, test = make_synthetic_dataset(2, 4, 2000, seed=3)
        assert len(set(train.labels.tolist())) == 4

    def test_empty_dataset(self):
        train, test = make_synthetic_dataset(2, 3, 0, seed=1)
        assert len(train.labels) == 0
        assert len(test.labels) == 0

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            make_synthetic_dataset(0, 3, 10, seed=1)
        with pytest.raises(ValueError):
            make_synthetic_dataset(2, 1, 10, seed=1)


class TestPartition:
    def test_sizes_and_disjointness(self):
        train, _ = make_synthetic_dataset(2, 4, 5000, seed=5)
        clients = [(f"c{i}", 300) for i in range(10)]
        shards = partition_noniid(train, clients, alpha=0.5, seed=11)
        used = []
        for cid, n in clients:
            assert len(shards[cid].labels) == n
            used.append(shards[cid].features)
        stacked = np.concatenate(used)
        # disjoint: no duplicate rows across shards
        assert len(np.unique(stacked, axis=0)) == len(stacked)

    def test_deterministic(self):
        train, _ = make_synthetic_dataset(2, 4, 2000, seed=5)
        clients = [("a", 400), ("b", 400)]
        s1 = partition_noniid(train, clients, 0.5, seed=2)
        s2 = partition_noniid(train, clients, 0.5, seed=2)
        assert np.array_equal(s1["a"].features, s2["a"].features)

    def test_large_alpha_near_iid(self):
        # alpha -> inf approaches the global class mix
        train, _ = make_synthetic_dataset(2, 4, 8000, seed=5)
        shards = partition_noniid(train, [("a", 2000)], alpha=1000.0, seed=3)
        counts = np.bincount(shards["a"].labels, minlength=4) / 2000
        assert np.all(np.abs(counts - 0.25) < 0.05)

    def test_small_alpha_skews(self):
        # alpha -> 0 concentrates each client on few classes
        train, _ = make_synthetic_dataset(2, 4, 8000, seed=5)
        shards = partition_noniid(train, [(f"c{i}", 500) for i in range(6)], 0.05, seed=3)
        top_shares = []
        for cid in shards:
            counts = np.bincount(shards[cid].labels, minlength=4)
            top_shares.append(counts.max() / counts.sum())
        assert np.mean(top_shares) > 0.7

    def test_over_request_rejected(self):
        train, _ = make_synthetic_dataset(2, 4, 100, seed=5)
        with pytest.raises(ValueError, match="want"):
            partition_noniid(train, [("a", 1000)], 0.5, seed=1)

    def test_bad_alpha_rejected(self):
        train, _ = make_synthetic_dataset(2, 4, 100, seed=5)
        with pytest.raises(ValueError):
            partition_noniid(train, [("a", 10)], 0.0, seed=1)


class TestGradient:
    def test_matches_finite_difference(self):
        rng = np.random.default_rng(0)
        features = rng.standard_normal((20, 3))
        labels = rng.integers(0, 4, size=20)
        params = rng.standard_normal(3 * 4 + 4) * 0.5
        _, analytic = loss_and_grad(params, features, labels, 4)
        numeric = finite_difference_grad(params, features, labels, 4)
        denom = np.maximum(np.abs(numeric), 1e-8)
        assert np.max(np.abs(analytic - numeric) / denom) < 1e-4

    def test_zero_params_loss_is_log_c(self):
        rng = np.random.default_rng(1)
        features = rng.standard_normal((50, 2))
        labels = rng.integers(0, 5, size=50)
        loss, _ = loss_and_grad(init_params(2, 5), features, labels, 5)
        assert loss == pytest.approx(np.log(5))


def test_centralized_sgd_learns():
    # sanity bound: plain SGD on the full data clears 90% on the test split
    train, test = make_synthetic_dataset(4, 4, 4000, seed=9)
    shard = DatasetShard("all", train.features, train.labels)
    params = init_params(4, 4)
    workload = WorkloadSpec(num_samples=len(shard.labels) * 5, batch_size=64)
    delta = local_train(params, shard, workload, lr=0.5, n_classes=4, seed=1)
    assert evaluate_accuracy(params + delta, test) > 0.9


class TestLocalTrain:
    def test_deterministic(self):
        train, _ = make_synthetic_dataset(2, 4, 1000, seed=9)
        shard = DatasetShard("a", train.features[:200], train.labels[:200])
        params = init_params(2, 4)
        w = WorkloadSpec(num_samples=200, batch_size=32)
        d1 = local_train(params, shard, w, 0.1, 4, seed=5)
        d2 = local_train(params, shard, w, 0.1, 4, seed=5)
        assert np.array_equal(d1, d2)

    def test_base_params_unchanged(self):
        train, _ = make_synthetic_dataset(2, 4, 500, seed=9)
        shard = DatasetShard("a", train.features[:100], train.labels[:100])
        params = init_params(2, 4)
        local_train(params, shard, WorkloadSpec(100, 32), 0.1, 4, seed=5)
        assert np.array_equal(params, init_params(2, 4))

    def test_empty_shard_zero_delta(self):
        shard = DatasetShard("a", np.zeros((0, 2)), np.zeros(0, dtype=int))
        delta = local_train(init_params(2, 4), shard, WorkloadSpec(100, 32), 0.1, 4)
        assert np.all(delta == 0)


class TestFedavg:
    def test_weighted_mean(self):
        base = np.array([1.0, 1.0])
        deltas = [np.array([2.0, 4.0]), np.array([4.0, 6.0])]
        assert fedavg(deltas, [1.0, 1.0], base) == pytest.approx([4.0, 6.0])
        assert fedavg(deltas, [3.0, 1.0], base) == pytest.approx([3.5, 5.5])

    def test_identity_with_zero_deltas(self):
        base = np.array([1.5, -2.0])
        out = fedavg([np.zeros(2), np.zeros(2)], [1.0, 2.0], base)
        assert np.array_equal(out, base)

    def test_errors(self):
        base = np.zeros(2)
        with pytest.raises(AggregationError):
            fedavg([], [], base)
        with pytest.raises(AggregationError):
            fedavg([np.zeros(2)], [1.0, 2.0], base)
        with pytest.raises(AggregationError):
            fedavg([np.zeros(3)], [1.0], base)
        with pytest.raises(AggregationError):
            fedavg([np.zeros(2)], [0.0], base)
        with pytest.raises(AggregationError):
            fedavg([np.zeros(2)], [-1.0], base)

    @settings(max_examples=50)
    @given(
        seed=st.integers(0, 10_000),
        n=st.integers(1, 6),
    )
    def test_permutation_invariant(self, seed, n):
        rng = np.random.default_rng(seed)
        base = rng.standard_normal(4)
        deltas = [rng.standard_normal(4) for _ in range(n)]
        weights = list(rng.uniform(0.1, 5.0, size=n))
        ref = fedavg(deltas, weights, base)
        perm = rng.permutation(n)
        out = fedavg([deltas[i] for i in perm], [weights[i] for i in perm], base)
        assert np.allclose(out, ref)
