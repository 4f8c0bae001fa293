# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Versioned JSON checkpoint container.

Floats are written with their shortest round-trip repr, so loading restores the parameter
vector bit for bit and saving the same state twice gives identical bytes.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any

import torch

from ..errors import ConfigError
from ..hierarchy import HierarchySpec, hierarchy_to_dict, parse_hierarchy_spec
from .forecaster_cfg import TrainConfig
from .network import ParameterSet, ParamSlot, build_layout
from .trainer import TrainingHistory

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    """Everything needed to forecast again from a trained model."""

    params: ParameterSet
    config: TrainConfig
    spec: HierarchySpec
    data_path: str | None = None
    history: TrainingHistory = field(default_factory=TrainingHistory)
    metadata: dict[str, Any] = field(default_factory=dict)


def checkpoint_to_dict(checkpoint: Checkpoint) -> dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "config": checkpoint.config.to_dict(),
        "scaler": checkpoint.config.to_dict()["scaler"],
        "seed": checkpoint.config.seed,
        "hierarchy": hierarchy_to_dict(checkpoint.spec),
        "data_path": checkpoint.data_path,
        "layout": [[slot.name, slot.offset, list(slot.shape)] for slot in checkpoint.params.layout],
        "params": checkpoint.params.flat.tolist(),
        "history": checkpoint.history.to_dict(),
        "metadata": checkpoint.metadata,
    }


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """Write the checkpoint as JSON, creating parent directories."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(checkpoint_to_dict(checkpoint), file, indent=1)
        file.write("\n")
    logger.debug("saved checkpoint with %d parameters to %s", checkpoint.params.numel, path)


def load_checkpoint(path: str) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        ConfigError: On an unknown format version or a layout that does not match the stored config.
    """
    with open(path, encoding="utf-8") as file:
        data = json.load(file)
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {version!r}")
    config = TrainConfig.from_dict(data["config"])
    layout = tuple(ParamSlot(name=name, offset=offset, shape=tuple(shape)) for name, offset, shape in data["layout"])
    if layout != build_layout(config):
        raise ConfigError("checkpoint layout does not match its configuration")
    params = ParameterSet(flat=torch.tensor(data["params"], dtype=torch.float64), layout=layout)
    return Checkpoint(
        params=params,
        config=config,
        spec=parse_hierarchy_spec(data["hierarchy"]),
        data_path=data.get("data_path"),
        history=TrainingHistory.from_dict(data.get("history", {})),
        metadata=data.get("metadata", {}),
    )
