# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""TemporalNorm: per-series scaling over the time axis and its inverse on mixture outputs.

Inputs are normalized as ``(x - a) / b`` with statistics fitted on the input window only. The
network's normalized-space outputs are mapped back with ``mu = b * omega_mu + a`` and
``sigma = b * omega_sigma``, which acts as a global skip connection around the network.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch

from .errors import DataError, ShapeError
from .mixture import MixtureParams

DEGENERATE_SCALE = 1e-12
"""Scales below this value are remapped to one."""


class ScalerKind(str, enum.Enum):
    """TemporalNorm variants, valued by their CLI names."""

    IDENTITY = "identity"
    MINMAX = "minmax"
    STANDARD = "standard"
    ROBUST = "robust"
    REVIN = "revin"


@dataclass(frozen=True)
class ScalerStats:
    """Shift and scale per ``(series, channel)``.

    Attributes:
        shift: Shift ``a`` of shape ``(..., series, channel)``.
        scale: Strictly positive scale ``b`` of the same shape.
        kind: Variant that produced the statistics.
    """

    shift: torch.Tensor
    scale: torch.Tensor
    kind: ScalerKind


@dataclass(frozen=True)
class RevinAffine:
    """Learnable per-channel affine of the revin variant, ``lambda * x + beta``."""

    weight: torch.Tensor
    bias: torch.Tensor


def _median(x: torch.Tensor, dim: int) -> torch.Tensor:
    # torch.median returns the lower middle element, quantile interpolates
    return torch.quantile(x, 0.5, dim=dim)


def fit_scaler(x_history, kind: ScalerKind | str) -> ScalerStats:
    """Fit TemporalNorm statistics over the time axis.

    Args:
        x_history: History of shape ``(..., series, t, channel)``.
        kind: ``minmax`` (min, range), ``standard`` (mean, population std), ``robust``
            (median, median absolute deviation), ``revin`` (standard statistics) or ``identity``.

    Returns:
        The fitted statistics; degenerate scales are remapped to one.
    """
    kind = ScalerKind(kind)
    x = torch.as_tensor(x_history, dtype=torch.float64)
    if x.ndim < 3 or x.shape[-2] < 1:
        raise ShapeError(f"expected history of shape (..., series, t>=1, channel), got {tuple(x.shape)}")
    if not torch.all(torch.isfinite(x)):
        raise DataError("non-finite values in scaler input")

    if kind is ScalerKind.IDENTITY:
        shift = torch.zeros_like(x[..., 0, :])
        scale = torch.ones_like(shift)
    elif kind is ScalerKind.MINMAX:
        shift = x.amin(dim=-2)
        scale = x.amax(dim=-2) - shift
    elif kind is ScalerKind.ROBUST:
        shift = _median(x, dim=-2)
        scale = _median(torch.abs(x - shift.unsqueeze(-2)), dim=-2)
    else:
        shift = x.mean(dim=-2)
        scale = x.var(dim=-2, unbiased=False).sqrt()

    scale = torch.where(scale < DEGENERATE_SCALE, torch.ones_like(scale), scale)
    return ScalerStats(shift=shift, scale=scale, kind=kind)


def normalize(x, stats: ScalerStats, revin: RevinAffine | None = None) -> torch.Tensor:
    """``(x - a) / b``, followed by ``lambda * (.) + beta`` for the revin variant.

    Args:
        x: Values of shape ``(..., series, t, channel)`` matching the statistics.
        stats: Fitted statistics.
        revin: Current learnable affine, required when ``stats.kind`` is revin.
    """
    x = torch.as_tensor(x, dtype=torch.float64)
    if x.shape[:-2] != stats.shift.shape[:-1] or x.shape[-1] != stats.shift.shape[-1]:
        raise ShapeError(f"input shape {tuple(x.shape)} does not match statistics {tuple(stats.shift.shape)}")
    x_norm = (x - stats.shift.unsqueeze(-2)) / stats.scale.unsqueeze(-2)
    if stats.kind is ScalerKind.REVIN:
        if revin is None:
            raise ShapeError("revin normalization needs the learnable affine")
        x_norm = revin.weight * x_norm + revin.bias
    return x_norm


def denormalize(x_norm, stats: ScalerStats, revin: RevinAffine | None = None) -> torch.Tensor:
    """Inverse of :func:`normalize` for values."""
    x_norm = torch.as_tensor(x_norm, dtype=torch.float64)
    if stats.kind is ScalerKind.REVIN:
        if revin is None:
            raise ShapeError("revin denormalization needs the learnable affine")
        x_norm = (x_norm - revin.bias) / revin.weight
    return x_norm * stats.scale.unsqueeze(-2) + stats.shift.unsqueeze(-2)


def denormalize_mixture(
    omega: MixtureParams, stats: ScalerStats, revin: RevinAffine | None = None, channel: int = 0
) -> MixtureParams:
    """Map normalized-space mixture parameters back to data units.

    Locations become ``b * omega_mu + a`` and scales ``b * omega_sigma``; weights are unchanged.
    For revin the learnable affine is inverted first, ``(omega_mu - beta) / lambda`` for locations
    and ``omega_sigma / |lambda|`` for scales.

    Args:
        omega: Normalized-space params with locations of shape ``(..., series, N_k, h)``.
        stats: Statistics of shape ``(..., series, channel)``.
        revin: Learnable affine for the revin variant.
        channel: Channel of the statistics that carries the target.
    """
    loc, scale = omega.locations, omega.scales
    if stats.kind is ScalerKind.REVIN:
        if revin is None:
            raise ShapeError("revin denormalization needs the learnable affine")
        weight, bias = revin.weight[channel], revin.bias[channel]
        loc = (loc - bias) / weight
        scale = scale / torch.abs(weight)
    shift = stats.shift[..., channel].unsqueeze(-1).unsqueeze(-1)
    factor = stats.scale[..., channel].unsqueeze(-1).unsqueeze(-1)
    if shift.shape[:-2] != loc.shape[:-2]:
        raise ShapeError(f"statistics shape {tuple(stats.shift.shape)} does not match params {tuple(loc.shape)}")
    return MixtureParams(weights=omega.weights, locations=factor * loc + shift, scales=factor * scale)
