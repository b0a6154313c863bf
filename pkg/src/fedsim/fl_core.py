"""Desk-scale federated learning: synthetic Non-IID data and FedAvg.

The trainable model is multinomial logistic regression, small enough that
local training is exact, fast, and admits a finite-difference gradient
oracle. Workload fields like seq_len and model_layers shape simulated
time only; they do not enter the model's math.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import AggregationError
from .profiles import WorkloadSpec


def stable_seed(*parts) -> int:
    """Hash-randomization-proof 32-bit seed derived from the given parts."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class Dataset:
    features: np.ndarray  # (n, F)
    labels: np.ndarray  # (n,) class ids in [0, C)
    num_classes: int


@dataclass
class DatasetShard:
    owner: str
    features: np.ndarray
    labels: np.ndarray


def make_synthetic_dataset(
    n_features: int, n_classes: int, n_total: int, seed: int
) -> tuple[Dataset, Dataset]:
    """Gaussian class clusters; returns (train, held-out 20% test)."""
    if n_features < 1 or n_classes < 2:
        raise ValueError("need n_features >= 1 and n_classes >= 2")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_classes, n_features)) * 3.0
    if n_total == 0:
        empty = Dataset(np.zeros((0, n_features)), np.zeros(0, dtype=int), n_classes)
        return empty, Dataset(
            np.zeros((0, n_features)), np.zeros(0, dtype=int), n_classes
        )
    labels = rng.integers(0, n_classes, size=n_total)
    features = means[labels] + rng.standard_normal((n_total, n_features))
    n_test = n_total // 5
    test = Dataset(features[:n_test], labels[:n_test], n_classes)
    train = Dataset(features[n_test:], labels[n_test:], n_classes)
    return train, test


def partition_noniid(
    dataset: Dataset,
    clients: list[tuple[str, int]],
    alpha: float,
    seed: int,
) -> dict[str, DatasetShard]:
    """Dirichlet(alpha) class mixtures per client, sampled without replacement.

    When a class pool runs dry the shortfall is filled from the classes
    with the most samples left, deterministically.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    wanted = sum(n for _, n in clients)
    if wanted > len(dataset.labels):
        raise ValueError(
            f"clients want {wanted} samples but dataset has {len(dataset.labels)}"
        )
    rng = np.random.default_rng(seed)
    n_classes = dataset.num_classes
    pools = {
        c: list(np.flatnonzero(dataset.labels == c)) for c in range(n_classes)
    }
    for c in pools:
        rng.shuffle(pools[c])
    shards: dict[str, DatasetShard] = {}
    for client_id, n_samples in clients:
        props = rng.dirichlet([alpha] * n_classes)
        counts = np.floor(props * n_samples).astype(int)
        # distribute the integer remainder to the largest fractional parts
        remainder = n_samples - counts.sum()
        frac_order = np.argsort(-(props * n_samples - counts), kind="stable")
        for c in frac_order[:remainder]:
            counts[c] += 1
        idx: list[int] = []
        short = 0
        for c in range(n_classes):
            take = min(counts[c], len(pools[c]))
            short += counts[c] - take
            for _ in range(take):
                idx.append(pools[c].pop())
        while short > 0:
            richest = max(pools, key=lambda c: len(pools[c]))
            if not pools[richest]:
                raise ValueError("dataset exhausted during partitioning")
            idx.append(pools[richest].pop())
            short -= 1
        idx_arr = np.array(sorted(idx), dtype=int)
        shards[client_id] = DatasetShard(
            owner=client_id,
            features=dataset.features[idx_arr],
            labels=dataset.labels[idx_arr],
        )
    return shards


# -- multinomial logistic model ------------------------------------------


def init_params(n_features: int, n_classes: int) -> np.ndarray:
    """Flat parameter vector: F x C weights followed by C biases."""
    return np.zeros(n_features * n_classes + n_classes)


def _unpack(params: np.ndarray, n_features: int, n_classes: int):
    w = params[: n_features * n_classes].reshape(n_features, n_classes)
    b = params[n_features * n_classes :]
    return w, b


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(
    params: np.ndarray, features: np.ndarray, labels: np.ndarray, n_classes: int
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its analytic gradient."""
    n, n_features = features.shape
    w, b = _unpack(params, n_features, n_classes)
    probs = _softmax(features @ w + b)
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    err = probs
    err[np.arange(n), labels] -= 1.0
    err /= n
    grad_w = features.T @ err
    grad_b = err.sum(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


def evaluate_accuracy(params: np.ndarray, dataset: Dataset) -> float:
    if len(dataset.labels) == 0:
        return 0.0
    n_features = dataset.features.shape[1]
    w, b = _unpack(params, n_features, dataset.num_classes)
    pred = np.argmax(dataset.features @ w + b, axis=1)
    return float(np.mean(pred == dataset.labels))


def local_train(
    params: np.ndarray,
    shard: DatasetShard,
    workload: WorkloadSpec,
    lr: float,
    n_classes: int,
    seed: int | str = 0,
) -> np.ndarray:
    """Mini-batch SGD for ceil(num_samples/batch_size) batches; returns the delta.

    Batches cycle through the shard with a reshuffle whenever it is
    exhausted; an empty shard yields a zero delta.
    """
    n = len(shard.labels)
    current = params.copy()
    if n == 0:
        return current - params
    n_batches = math.ceil(workload.num_samples / workload.batch_size)
    rng = np.random.default_rng(stable_seed("local_train", seed))
    order = rng.permutation(n)
    pos = 0
    for _ in range(n_batches):
        if pos >= n:
            order = rng.permutation(n)
            pos = 0
        batch = order[pos : pos + workload.batch_size]
        pos += workload.batch_size
        _, grad = loss_and_grad(
            current, shard.features[batch], shard.labels[batch], n_classes
        )
        current -= lr * grad
    return current - params


def fedavg(
    deltas: list[np.ndarray], weights: list[float], base: np.ndarray
) -> np.ndarray:
    """base + sample-count-weighted mean of the deltas."""
    if not deltas:
        raise AggregationError("no deltas to aggregate")
    if len(deltas) != len(weights):
        raise AggregationError("deltas and weights length mismatch")
    if any(w < 0 for w in weights):
        raise AggregationError("weights must be non-negative")
    total = float(sum(weights))
    if total == 0:
        raise AggregationError("weights must not all be zero")
    for d in deltas:
        if d.shape != base.shape:
            raise AggregationError(
                f"delta shape {d.shape} does not match base {base.shape}"
            )
    out = base.copy()
    for d, w in zip(deltas, weights):
        out += (w / total) * d
    return out
