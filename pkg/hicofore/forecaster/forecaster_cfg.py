# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Configuration classes for the mixture forecaster and its training loop."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

import yaml

from ..errors import ConfigError
from ..reconcile import ReconcilerKind
from ..scaling import ScalerKind

AGENTS_DIR = os.path.join(os.path.dirname(__file__), "agents")
"""Directory holding the registered YAML configurations."""

LIKELIHOODS = ("composite", "univariate", "joint")


@dataclass
class MixtureNetworkCfg:
    """Shape of the MLP and its mixture head."""

    input_multiplier: int = 3
    """Input window length is ``input_multiplier * horizon``."""
    hidden_size: int = 256
    num_layers: int = 3
    num_components: int = 10


@dataclass
class OptimizerCfg:
    """ADAM settings and batch composition."""

    learning_rate: float = 1.0e-3
    num_lr_decays: int = 3
    lr_decay_factor: float = 0.3
    max_steps: int = 1000
    batch_size: int = 8
    """Series per composite-likelihood batch."""
    windows_per_batch: int = 16
    """Forecast origins drawn per step; each contributes one joint term per batch."""
    likelihood: str = "composite"


@dataclass
class EarlyStoppingCfg:
    """Validation cadence and patience."""

    eval_interval: int = 50
    patience: int = 5
    val_samples: int = 200
    """Bootstrap samples drawn for every validation sCRPS."""


@dataclass
class TrainConfig:
    """Top-level training configuration."""

    horizon: int = 12
    seed: int = 0
    scaler: ScalerKind = ScalerKind.ROBUST
    reconciler: ReconcilerKind = ReconcilerKind.MINTRACE_OLS
    network: MixtureNetworkCfg = field(default_factory=MixtureNetworkCfg)
    optimizer: OptimizerCfg = field(default_factory=OptimizerCfg)
    early_stopping: EarlyStoppingCfg = field(default_factory=EarlyStoppingCfg)

    @property
    def input_size(self) -> int:
        return self.network.input_multiplier * self.horizon

    def validate(self) -> TrainConfig:
        """Check invariants, returning ``self``.

        Raises:
            ConfigError: When a count is below one, the learning rate is negative or an enum
                value is unknown.
        """
        counts = {
            "horizon": self.horizon,
            "network.input_multiplier": self.network.input_multiplier,
            "network.hidden_size": self.network.hidden_size,
            "network.num_layers": self.network.num_layers,
            "network.num_components": self.network.num_components,
            "optimizer.max_steps": self.optimizer.max_steps,
            "optimizer.batch_size": self.optimizer.batch_size,
            "optimizer.windows_per_batch": self.optimizer.windows_per_batch,
            "early_stopping.eval_interval": self.early_stopping.eval_interval,
            "early_stopping.patience": self.early_stopping.patience,
            "early_stopping.val_samples": self.early_stopping.val_samples,
        }
        for name, value in counts.items():
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        # lr == 0 freezes the parameters
        if self.optimizer.learning_rate < 0.0:
            raise ConfigError(f"learning rate must be non-negative, got {self.optimizer.learning_rate}")
        if self.optimizer.num_lr_decays < 0:
            raise ConfigError("number of learning rate decays must be non-negative")
        if self.optimizer.likelihood not in LIKELIHOODS:
            raise ConfigError(f"likelihood must be one of {LIKELIHOODS}, got '{self.optimizer.likelihood}'")
        try:
            self.scaler = ScalerKind(self.scaler)
            self.reconciler = ReconcilerKind(self.reconciler)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        return self

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["scaler"] = ScalerKind(self.scaler).value
        data["reconciler"] = ReconcilerKind(self.reconciler).value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        """Build a config from a nested dictionary, rejecting unknown keys."""
        data = dict(data)
        groups = {"network": MixtureNetworkCfg, "optimizer": OptimizerCfg, "early_stopping": EarlyStoppingCfg}
        kwargs: dict[str, Any] = {}
        try:
            for name, group_cls in groups.items():
                kwargs[name] = group_cls(**(data.pop(name, None) or {}))
            cfg = cls(**data, **kwargs)
        except TypeError as err:
            raise ConfigError(f"invalid configuration: {err}") from err
        return cfg.validate()


def load_cfg_from_registry(name: str = "default") -> TrainConfig:
    """Load a registered YAML configuration from the ``agents`` directory.

    Args:
        name: Registry entry; ``"default"`` resolves to ``agents/default_cfg.yaml``. A path to a
            YAML file is accepted as well.
    """
    path = name if os.path.isfile(name) else os.path.join(AGENTS_DIR, f"{name}_cfg.yaml")
    if not os.path.isfile(path):
        raise ConfigError(f"no configuration registered as '{name}'")
    with open(path, encoding="utf-8") as file:
        data = yaml.safe_load(file) or {}
    return TrainConfig.from_dict(data)


def dump_yaml(path: str, cfg: TrainConfig) -> None:
    """Write the resolved configuration as YAML, creating parent directories."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(cfg.to_dict(), file, sort_keys=False)
