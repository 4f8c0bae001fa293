# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Flat parameter layout and forward pass of the mixture MLP.

The network maps one normalized input window of length ``L`` to normalized-space mixture
parameters for the next ``H`` steps. Mixture weights are a global logit vector shared by every
input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..errors import ShapeError
from ..mixture import MIN_SCALE, MixtureParams
from ..scaling import RevinAffine, ScalerKind
from .forecaster_cfg import TrainConfig


@dataclass(frozen=True)
class ParamSlot:
    """Location of one named tensor inside the flat parameter vector."""

    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def numel(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class ParameterSet:
    """Flat float64 parameter vector and the layout table covering it exactly once."""

    flat: torch.Tensor
    layout: tuple[ParamSlot, ...]

    def __post_init__(self):
        expected = sum(slot.numel for slot in self.layout)
        if self.flat.ndim != 1 or self.flat.numel() != expected:
            raise ShapeError(f"flat parameters of shape {tuple(self.flat.shape)} do not cover a layout of {expected}")

    @property
    def numel(self) -> int:
        return self.flat.numel()

    def view(self, name: str) -> torch.Tensor:
        for slot in self.layout:
            if slot.name == name:
                return self.flat[slot.offset : slot.offset + slot.numel].view(slot.shape)
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(slot.name == name for slot in self.layout)

    def with_flat(self, flat: torch.Tensor) -> ParameterSet:
        return ParameterSet(flat=flat, layout=self.layout)


def build_layout(config: TrainConfig) -> tuple[ParamSlot, ...]:
    """Deterministic layout for a configuration."""
    net = config.network
    shapes: list[tuple[str, tuple[int, ...]]] = []
    fan_in = config.input_size
    for layer in range(net.num_layers):
        shapes.append((f"encoder.{layer}.weight", (net.hidden_size, fan_in)))
        shapes.append((f"encoder.{layer}.bias", (net.hidden_size,)))
        fan_in = net.hidden_size
    head_size = 2 * net.num_components * config.horizon
    shapes.append(("head.weight", (head_size, fan_in)))
    shapes.append(("head.bias", (head_size,)))
    shapes.append(("mixture.logits", (net.num_components,)))
    if config.scaler == ScalerKind.REVIN:
        shapes.append(("revin.weight", (1,)))
        shapes.append(("revin.bias", (1,)))

    layout, offset = [], 0
    for name, shape in shapes:
        slot = ParamSlot(name=name, offset=offset, shape=shape)
        layout.append(slot)
        offset += slot.numel
    return tuple(layout)


def init_parameters(config: TrainConfig, seed: int | None = None) -> ParameterSet:
    """Uniform fan-in initialization of the weights; zero biases and logits; revin at identity."""
    layout = build_layout(config)
    generator = torch.Generator().manual_seed(int(config.seed if seed is None else seed))
    flat = torch.zeros(sum(slot.numel for slot in layout), dtype=torch.float64)
    for slot in layout:
        chunk = flat[slot.offset : slot.offset + slot.numel]
        if slot.name.endswith(".weight") and not slot.name.startswith("revin"):
            bound = 1.0 / math.sqrt(slot.shape[1])
            chunk.copy_((torch.rand(slot.numel, generator=generator, dtype=torch.float64) * 2.0 - 1.0) * bound)
        elif slot.name == "revin.weight":
            chunk.fill_(1.0)
    return ParameterSet(flat=flat, layout=layout)


def revin_affine(params: ParameterSet) -> RevinAffine | None:
    """The learnable revin affine when the layout carries one."""
    if not params.has("revin.weight"):
        return None
    return RevinAffine(weight=params.view("revin.weight"), bias=params.view("revin.bias"))


def forward(params: ParameterSet, window: torch.Tensor, config: TrainConfig) -> MixtureParams:
    """Normalized-space mixture parameters for normalized input windows.

    Args:
        params: Network parameters laid out for ``config``.
        window: Normalized inputs of shape ``(..., L)``.
        config: Training configuration.

    Returns:
        Weights of shape ``(N_k,)`` from the global logits, locations and scales of shape
        ``(..., N_k, H)``; scales are ``softplus(.) + 1e-6``.
    """
    window = torch.as_tensor(window, dtype=torch.float64)
    if window.shape[-1] != config.input_size:
        raise ShapeError(f"expected windows of length {config.input_size}, got {window.shape[-1]}")
    if params.layout != build_layout(config):
        raise ShapeError("parameter layout does not match the configuration")

    hidden = window
    for layer in range(config.network.num_layers):
        hidden = F.relu(F.linear(hidden, params.view(f"encoder.{layer}.weight"), params.view(f"encoder.{layer}.bias")))
    out = F.linear(hidden, params.view("head.weight"), params.view("head.bias"))
    out = out.view(*out.shape[:-1], 2, config.network.num_components, config.horizon)

    weights = torch.softmax(params.view("mixture.logits"), dim=-1)
    loc = out[..., 0, :, :]
    scale = F.softplus(out[..., 1, :, :]) + MIN_SCALE
    return MixtureParams(weights=weights, locations=loc, scales=scale)
