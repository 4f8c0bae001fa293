# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Coherent multivariate Gaussian mixture forecast distribution.

The mixture index is shared by every series and horizon of one joint draw:

.. math::

    p(y) = \\sum_k w_k \\prod_{i, \\tau} N(y_{i,\\tau} | \\mu_{i,k,\\tau}, \\sigma_{i,k,\\tau})

so the components carry the cross-series correlation. ``scales`` are standard deviations. All
densities are evaluated in log space with log-sum-exp over components.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from .errors import MetricError, MixtureError, ShapeError

MIN_SCALE = 1e-6
"""Scales are clamped to at least this value on construction."""

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixtureParams:
    """Mixture weights, locations and scales.

    Attributes:
        weights: Component weights, shape ``(N_k,)``.
        locations: Component means, shape ``(..., N_i, N_k, h)``. Leading axes index independent
            draws (e.g. training windows) that share the weights.
        scales: Component standard deviations, same shape as ``locations``.
    """

    weights: torch.Tensor
    locations: torch.Tensor
    scales: torch.Tensor

    @classmethod
    def create(cls, weights, locations, scales, validate: bool = True) -> MixtureParams:
        """Build params from array-likes, clamping scales to :data:`MIN_SCALE`.

        Args:
            weights: Component weights.
            locations: Component means.
            scales: Component standard deviations.
            validate: Check weight normalization and shape consistency.
        """
        weights = torch.as_tensor(weights, dtype=torch.float64)
        locations = torch.as_tensor(locations, dtype=torch.float64)
        scales = torch.clamp_min(torch.as_tensor(scales, dtype=torch.float64), MIN_SCALE)
        if validate:
            if weights.ndim != 1 or weights.numel() < 1:
                raise ShapeError(f"weights must be a non-empty vector, got shape {tuple(weights.shape)}")
            if locations.ndim < 3 or locations.shape[-2] != weights.numel():
                raise ShapeError(
                    f"locations must have shape (..., N_i, {weights.numel()}, h), got {tuple(locations.shape)}"
                )
            if scales.shape != locations.shape:
                raise ShapeError(f"scales shape {tuple(scales.shape)} != locations shape {tuple(locations.shape)}")
            if torch.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-10:
                raise MixtureError("weights must be non-negative and sum to 1")
        return cls(weights=weights, locations=locations, scales=scales)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def n_series(self) -> int:
        return self.locations.shape[-3]

    @property
    def horizon(self) -> int:
        return self.locations.shape[-1]

    def select(self, series: Sequence[int]) -> MixtureParams:
        """Restrict to a subset of series (keeps weights)."""
        index = torch.as_tensor(list(series), dtype=torch.long)
        return MixtureParams(
            weights=self.weights,
            locations=self.locations.index_select(-3, index),
            scales=self.scales.index_select(-3, index),
        )


##
# Likelihoods.
##


def _gaussian_logpdf(y: torch.Tensor, loc: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    z = (y - loc) / scale
    return -0.5 * z * z - torch.log(scale) - _HALF_LOG_2PI


def component_log_likelihood(params: MixtureParams, y: torch.Tensor) -> torch.Tensor:
    """Per-component joint log density ``log w_k + sum_{i,tau} log N(...)``, shape ``(..., N_k)``."""
    y = torch.as_tensor(y, dtype=torch.float64)
    if y.shape != params.locations.shape[:-2] + params.locations.shape[-1:]:
        raise ShapeError(
            f"targets shape {tuple(y.shape)} does not match locations shape {tuple(params.locations.shape)}"
        )
    log_pdf = _gaussian_logpdf(y.unsqueeze(-2), params.locations, params.scales)
    return torch.log(params.weights) + log_pdf.sum(dim=(-3, -1))


def joint_nll(params: MixtureParams, y) -> torch.Tensor:
    """Negative log of the joint mixture density at ``y`` of shape ``(..., N_i, h)``.

    Leading axes are independent draws and their NLLs are summed.
    """
    return -torch.logsumexp(component_log_likelihood(params, y), dim=-1).sum()


def _check_partition(batches: Sequence[Sequence[int]], n_series: int | None) -> int:
    flat = [index for batch in batches for index in batch]
    if any(len(batch) == 0 for batch in batches):
        raise ShapeError("composite batches must be non-empty")
    if len(set(flat)) != len(flat):
        raise ShapeError("composite batches overlap")
    total = n_series if n_series is not None else (max(flat) + 1 if flat else 0)
    if set(flat) != set(range(total)):
        raise ShapeError(f"composite batches do not partition the {total} series")
    return total


def composite_nll(
    params_by_batch: Sequence[MixtureParams],
    y_by_batch: Sequence,
    batches: Sequence[Sequence[int]],
    n_series: int | None = None,
) -> torch.Tensor:
    """Negative log composite likelihood: the sum of per-batch joint NLLs.

    Args:
        params_by_batch: Mixture restricted to each batch's series.
        y_by_batch: Targets of each batch, shape ``(..., len(batch), h)``.
        batches: Partition of the series indices.
        n_series: Total number of series. Defaults to one past the largest index.
    """
    _check_partition(batches, n_series)
    if not len(params_by_batch) == len(y_by_batch) == len(batches):
        raise ShapeError("one params and one target block are needed per batch")
    total = torch.zeros((), dtype=torch.float64)
    for params, y, batch in zip(params_by_batch, y_by_batch, batches):
        if params.n_series != len(batch):
            raise ShapeError(f"batch of {len(batch)} series got params for {params.n_series}")
        total = total + joint_nll(params, y)
    return total


def composite_nll_partition(params: MixtureParams, y, batches: Sequence[Sequence[int]]) -> torch.Tensor:
    """Composite NLL of full-hierarchy params and targets under a partition of the series."""
    y = torch.as_tensor(y, dtype=torch.float64)
    _check_partition(batches, params.n_series)
    params_by_batch = [params.select(batch) for batch in batches]
    y_by_batch = [y.index_select(-2, torch.as_tensor(list(batch), dtype=torch.long)) for batch in batches]
    return composite_nll(params_by_batch, y_by_batch, batches, params.n_series)


def univariate_nll(params: MixtureParams, y) -> torch.Tensor:
    """Composite NLL with every series in its own batch."""
    return composite_nll_partition(params, y, [[i] for i in range(params.n_series)])


def marginal_logpdf(params: MixtureParams, series: int, horizon: int, y: float) -> torch.Tensor:
    """Log density of the univariate marginal of series ``series`` at step ``horizon``."""
    if params.locations.ndim != 3:
        raise ShapeError("marginal_logpdf expects params without leading draw axes")
    if not 0 <= series < params.n_series or not 0 <= horizon < params.horizon:
        raise IndexError(f"marginal ({series}, {horizon}) out of range")
    loc = params.locations[series, :, horizon]
    scale = params.scales[series, :, horizon]
    y = torch.as_tensor(y, dtype=torch.float64)
    return torch.logsumexp(torch.log(params.weights) + _gaussian_logpdf(y, loc, scale), dim=-1)


##
# Moments and sampling.
##


def mixture_mean(params: MixtureParams) -> torch.Tensor:
    """Mixture mean, shape ``(..., N_i, h)``."""
    return torch.einsum("...ikh,k->...ih", params.locations, params.weights)


def mixture_covariance(params: MixtureParams, horizon: int) -> torch.Tensor:
    """Cross-series covariance at one horizon step.

    The diagonal carries the expected component variance; the mean-spread term
    ``sum_k w_k (mu_k - mu_bar)(mu_k - mu_bar)'`` has rank at most ``N_k - 1``.
    """
    mu = params.locations[..., horizon]  # (N_i, N_k)
    var = params.scales[..., horizon] ** 2
    mean = mu @ params.weights
    spread = mu - mean.unsqueeze(-1)
    return torch.diag(var @ params.weights) + (spread * params.weights) @ spread.T


def sample(params: MixtureParams, n: int, seed: int) -> torch.Tensor:
    """Ancestral samples of shape ``(n, N_i, h)``.

    One component index is drawn per sample and shared by every series and horizon.
    """
    if n < 1:
        raise ShapeError(f"sample count must be at least 1, got {n}")
    if params.locations.ndim != 3:
        raise ShapeError("sample expects params without leading draw axes")
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        components = torch.multinomial(params.weights, n, replacement=True, generator=generator)
        noise = torch.randn(
            (n, params.n_series, params.horizon), generator=generator, dtype=torch.float64
        )
        loc = params.locations[:, components, :].permute(1, 0, 2)
        scale = params.scales[:, components, :].permute(1, 0, 2)
        return loc + scale * noise


def quantiles_from_samples(samples, q_grid) -> np.ndarray:
    """Empirical quantiles along the sample axis by linear interpolation of order statistics.

    Args:
        samples: Samples of shape ``(n, ...)``.
        q_grid: Ascending probabilities in ``(0, 1)``.

    Returns:
        Array of shape ``(len(q_grid), ...)``.
    """
    samples = samples.detach().cpu().numpy() if isinstance(samples, torch.Tensor) else np.asarray(samples)
    q_grid = np.asarray(q_grid, dtype=np.float64)
    if samples.size == 0 or samples.shape[0] == 0:
        raise MetricError("cannot take quantiles of an empty sample")
    if q_grid.ndim != 1 or np.any(q_grid <= 0.0) or np.any(q_grid >= 1.0) or np.any(np.diff(q_grid) <= 0.0):
        raise MetricError("q_grid must be strictly ascending inside (0, 1)")
    return np.quantile(samples.astype(np.float64), q_grid, axis=0)
