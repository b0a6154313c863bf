"""Experiment configuration: TOML-style files, validation, overrides.

The format is sections of `key = value` lines where values are JSON
literals (numbers, booleans, double-quoted strings, arrays). Unknown keys
are rejected so typos fail loudly, and the fully-resolved tree is embedded
in every summary.json as an audit trail.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .engine import DataParams, TrainParams
from .errors import ConfigError
from .profiles import ClientProfile, DistributionSpec, FleetConfig, generate_fleet, load_fleet

_TOP_KEYS = {
    "seed",
    "rounds",
    "participants_per_round",
    "scheduler",
    "theta",
    "max_executors",
    "dynamic_parallelism",
    "aggregation",
    "async_buffer",
    "output_dir",
}
_SECTION_KEYS = {
    "fleet": {
        "path",
        "size",
        "budget_levels",
        "budget_weights",
        "num_samples",
        "batch_size",
        "layers",
        "seq_len",
        "extra_factor",
        "demand_profiles",
        "demand_weights",
    },
    "cost": {"alpha", "beta"},
    "manager": {"launch_latency", "terminate_latency", "upload_latency"},
    "data": {"features", "classes", "alpha"},
    "train": {"enabled", "lr"},
}


def _parse_value(text: str):
    text = text.strip()
    for literal, value in (("true", True), ("false", False)):
        if text == literal:
            return value
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"cannot parse value {text!r}: {e}") from e


def parse_config_text(text: str) -> dict:
    """Parse sectioned key = value text into a nested dict."""
    tree: dict = {}
    section: dict = tree
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            section = tree.setdefault(name, {})
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        section[key.strip()] = _parse_value(value)
    return tree


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply --set a.b=value overrides onto a parsed config tree."""
    tree = copy.deepcopy(tree)
    for item in overrides:
        path, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like key=value")
        keys = path.strip().split(".")
        node = tree
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a non-section key")
        try:
            node[keys[-1]] = _parse_value(value)
        except ConfigError:
            node[keys[-1]] = value.strip()
    return tree


@dataclass
class ExperimentConfig:
    fleet_config: FleetConfig = field(default_factory=FleetConfig)
    fleet_path: str | None = None
    fleet_size: int = 8
    fleet_dist: DistributionSpec = field(default_factory=DistributionSpec)
    data: DataParams = field(default_factory=DataParams)
    train: TrainParams = field(default_factory=TrainParams)
    output_dir: str = "out"

    @classmethod
    def from_tree(cls, tree: dict) -> "ExperimentConfig":
        tree = copy.deepcopy(tree)
        cfg = cls()
        fc = cfg.fleet_config
        for key in list(tree):
            if isinstance(tree[key], dict):
                continue
            if key not in _TOP_KEYS:
                raise ConfigError(f"unknown configuration key: {key}")
        for section in tree:
            if isinstance(tree[section], dict):
                if section not in _SECTION_KEYS:
                    raise ConfigError(f"unknown configuration section: [{section}]")
                for key in tree[section]:
                    if key not in _SECTION_KEYS[section]:
                        raise ConfigError(f"unknown configuration key: {section}.{key}")

        fc.seed = int(tree.get("seed", fc.seed))
        fc.rounds = int(tree.get("rounds", fc.rounds))
        fc.participants_per_round = int(
            tree.get("participants_per_round", fc.participants_per_round)
        )
        fc.scheduler_kind = tree.get("scheduler", fc.scheduler_kind)
        fc.theta = float(tree.get("theta", fc.theta))
        fc.max_executors = int(tree.get("max_executors", fc.max_executors))
        fc.dynamic_parallelism = bool(
            tree.get("dynamic_parallelism", fc.dynamic_parallelism)
        )
        fc.aggregation = tree.get("aggregation", fc.aggregation)
        fc.async_buffer = int(tree.get("async_buffer", fc.async_buffer))
        cfg.output_dir = tree.get("output_dir", cfg.output_dir)

        cost = tree.get("cost", {})
        fc.alpha = float(cost.get("alpha", fc.alpha))
        fc.beta = float(cost.get("beta", fc.beta))
        manager = tree.get("manager", {})
        fc.launch_latency = float(manager.get("launch_latency", 0.0))
        fc.terminate_latency = float(manager.get("terminate_latency", 0.0))
        fc.upload_latency = float(manager.get("upload_latency", 0.0))

        fleet = tree.get("fleet", {})
        cfg.fleet_path = fleet.get("path")
        cfg.fleet_size = int(fleet.get("size", cfg.fleet_size))
        d = cfg.fleet_dist
        cfg.fleet_dist = DistributionSpec(
            budget_levels=fleet.get("budget_levels", d.budget_levels),
            budget_weights=fleet.get("budget_weights"),
            num_samples=fleet.get("num_samples", d.num_samples),
            batch_size=fleet.get("batch_size", d.batch_size),
            model_layers=fleet.get("layers", d.model_layers),
            seq_len=fleet.get("seq_len", d.seq_len),
            extra_model_factor=fleet.get("extra_factor", d.extra_model_factor),
            demand_profiles=fleet.get("demand_profiles", d.demand_profiles),
            demand_weights=fleet.get("demand_weights"),
        )

        data = tree.get("data", {})
        cfg.data = DataParams(
            features=int(data.get("features", 2)),
            classes=int(data.get("classes", 4)),
            alpha=float(data.get("alpha", 0.5)),
        )
        train = tree.get("train", {})
        cfg.train = TrainParams(
            enabled=bool(train.get("enabled", True)),
            lr=float(train.get("lr", 0.1)),
        )

        fc.validate()
        if cfg.fleet_path is None:
            cfg.fleet_dist.validate()
        return cfg

    def build_fleet(self) -> list[ClientProfile]:
        if self.fleet_path is not None:
            return load_fleet(self.fleet_path)
        return generate_fleet(self.fleet_dist, self.fleet_size, self.fleet_config.seed)

    def resolved(self) -> dict:
        """Fully-resolved configuration tree for the summary audit trail."""
        fc = self.fleet_config
        return {
            "seed": fc.seed,
            "rounds": fc.rounds,
            "participants_per_round": fc.participants_per_round,
            "scheduler": fc.scheduler_kind,
            "theta": fc.theta,
            "max_executors": fc.max_executors,
            "dynamic_parallelism": fc.dynamic_parallelism,
            "aggregation": fc.aggregation,
            "async_buffer": fc.async_buffer,
            "output_dir": self.output_dir,
            "cost": {"alpha": fc.alpha, "beta": fc.beta},
            "manager": {
                "launch_latency": fc.launch_latency,
                "terminate_latency": fc.terminate_latency,
                "upload_latency": fc.upload_latency,
            },
            "fleet": {
                "path": self.fleet_path,
                "size": self.fleet_size,
                "budget_levels": list(self.fleet_dist.budget_levels),
                "budget_weights": (
                    list(self.fleet_dist.budget_weights)
                    if self.fleet_dist.budget_weights is not None
                    else None
                ),
                "num_samples": self.fleet_dist.num_samples,
                "batch_size": self.fleet_dist.batch_size,
                "layers": self.fleet_dist.model_layers,
                "seq_len": self.fleet_dist.seq_len,
                "extra_factor": self.fleet_dist.extra_model_factor,
                "demand_profiles": list(self.fleet_dist.demand_profiles),
            },
            "data": {
                "features": self.data.features,
                "classes": self.data.classes,
                "alpha": self.data.alpha,
            },
            "train": {"enabled": self.train.enabled, "lr": self.train.lr},
        }


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    with open(path) as f:
        tree = parse_config_text(f.read())
    if overrides:
        tree = apply_overrides(tree, overrides)
    return ExperimentConfig.from_tree(tree)
