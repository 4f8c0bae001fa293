# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Coherent forecast distributions from a trained parameter set."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import torch

from ..errors import ShapeError
from ..evaluate import DEFAULT_Q_GRID
from ..hierarchy import HierarchySpec, summing_matrix
from ..mixture import MixtureParams, mixture_mean, quantiles_from_samples, sample
from ..pipeline import PanelDataset
from ..reconcile import ProjectionMatrix, ReconcilerKind, build_projection, reconcile_samples, residual_variances
from ..scaling import denormalize_mixture, fit_scaler, normalize
from .forecaster_cfg import TrainConfig
from .network import ParameterSet, forward, revin_affine


@dataclass(frozen=True)
class ForecastSet:
    """Reconciled samples and their quantiles for every series and horizon step.

    Attributes:
        ids: Series ids in hierarchy order.
        samples: Coherent samples, shape ``(n_samples, N_i, h)``.
        quantiles: Empirical quantiles on ``q_grid``, shape ``(len(q_grid), N_i, h)``.
        q_grid: Quantile levels.
        strategy: Reconciler that produced the samples.
        seed: Sampling seed.
        origin: Index of the first forecast step in the panel.
    """

    ids: tuple[str, ...]
    samples: np.ndarray
    quantiles: np.ndarray
    q_grid: np.ndarray
    strategy: ReconcilerKind
    seed: int
    origin: int

    @property
    def horizon(self) -> int:
        return self.samples.shape[2]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def select(self, series: list[int]) -> ForecastSet:
        """Forecast restricted to a subset of series."""
        return ForecastSet(
            ids=tuple(self.ids[i] for i in series),
            samples=self.samples[:, series],
            quantiles=self.quantiles[:, series],
            q_grid=self.q_grid,
            strategy=self.strategy,
            seed=self.seed,
            origin=self.origin,
        )

    def to_dict(self, include_samples: bool = False) -> dict[str, Any]:
        """JSON-ready summary: mean and quantiles per series (samples on request)."""
        mean = self.mean()
        series = {}
        for row, series_id in enumerate(self.ids):
            entry = {
                "mean": mean[row].tolist(),
                "quantiles": {f"{q:.4g}": self.quantiles[k, row].tolist() for k, q in enumerate(self.q_grid)},
            }
            if include_samples:
                entry["samples"] = self.samples[:, row].tolist()
            series[series_id] = entry
        return {
            "strategy": self.strategy.value,
            "seed": self.seed,
            "origin": self.origin,
            "n_samples": int(self.samples.shape[0]),
            "horizon": self.horizon,
            "series": series,
        }


def _input_windows(dataset: PanelDataset, origins: list[int], length: int) -> torch.Tensor:
    windows = np.stack([dataset.window(origin, length) for origin in origins])
    return torch.as_tensor(windows, dtype=torch.float64)


def base_distribution(
    params: ParameterSet, dataset: PanelDataset, config: TrainConfig, origins: list[int]
) -> MixtureParams:
    """Denormalized base mixture for every series at each origin.

    Returns:
        Params with locations of shape ``(len(origins), N_i, N_k, H)``.
    """
    windows = _input_windows(dataset, origins, config.input_size)
    stats = fit_scaler(windows.unsqueeze(-1), config.scaler)
    revin = revin_affine(params)
    omega = forward(params, normalize(windows.unsqueeze(-1), stats, revin).squeeze(-1), config)
    return denormalize_mixture(omega, stats, revin)


def base_point_forecast(params: ParameterSet, dataset: PanelDataset, config: TrainConfig, origin: int) -> np.ndarray:
    """Mixture mean of the base forecast at one origin, shape ``(N_i, H)``."""
    with torch.no_grad():
        theta = base_distribution(params, dataset, config, [origin])
        return mixture_mean(theta)[0].numpy()


def in_sample_residuals(
    params: ParameterSet, dataset: PanelDataset, config: TrainConfig, stop: int, max_windows: int = 64
) -> np.ndarray:
    """One-step-ahead residuals of the base mixture mean over origins before ``stop``.

    Returns:
        Residuals of shape ``(N_i, n_origins)``.
    """
    first = config.input_size
    if stop - 1 < first:
        raise ShapeError(f"no in-sample origin: window of {first} does not fit before {stop}")
    origins = np.unique(np.linspace(first, stop - 1, num=min(max_windows, stop - first)).astype(int)).tolist()
    with torch.no_grad():
        theta = base_distribution(params, dataset, config, origins)
        one_step = mixture_mean(theta)[..., 0].numpy()  # (W, N_i)
    actual = dataset.values[:, origins].T
    return (actual - one_step).T


def predict_distribution(
    params: ParameterSet,
    dataset: PanelDataset,
    spec: HierarchySpec,
    config: TrainConfig,
    n_samples: int,
    seed: int,
    projection: ProjectionMatrix,
    origin: int | None = None,
    q_grid: np.ndarray = DEFAULT_Q_GRID,
) -> ForecastSet:
    """Bootstrap-reconciled forecast distribution at ``origin``.

    Each series' window is normalized, passed through the network, denormalized and sampled
    from the joint mixture; every sample is then mapped through ``S P``.

    Args:
        params: Trained parameters.
        dataset: Panel providing the input windows.
        spec: Hierarchy of the panel.
        config: Training configuration.
        n_samples: Number of joint samples.
        seed: Sampling seed.
        projection: Reconciliation projection.
        origin: First forecast step; defaults to the end of the panel.
        q_grid: Quantile levels stored on the result.
    """
    origin = dataset.length if origin is None else origin
    with torch.no_grad():
        theta = base_distribution(params, dataset, config, [origin])
        single = MixtureParams(weights=theta.weights, locations=theta.locations[0], scales=theta.scales[0])
        base = sample(single, n_samples, seed).numpy()
    reconciled = reconcile_samples(summing_matrix(spec), projection, base, seed=seed)
    return ForecastSet(
        ids=spec.series_ids,
        samples=reconciled.data,
        quantiles=quantiles_from_samples(reconciled.data, q_grid),
        q_grid=np.asarray(q_grid, dtype=np.float64),
        strategy=reconciled.strategy,
        seed=seed,
        origin=origin,
    )


def fit_projection(
    params: ParameterSet, dataset: PanelDataset, spec: HierarchySpec, config: TrainConfig, stop: int
) -> ProjectionMatrix:
    """Projection of the configured reconciler, fitted on observations before ``stop``.

    TopDown uses the historical proportions of the bottoms and MinTraceWLS the variances of
    the model's in-sample one-step residuals.
    """
    strategy = ReconcilerKind(config.reconciler)
    if strategy is ReconcilerKind.TOP_DOWN:
        return build_projection(spec, strategy, y_history=dataset.bottom_values(spec)[:, :stop])
    if strategy is ReconcilerKind.MINTRACE_WLS:
        variances = residual_variances(in_sample_residuals(params, dataset, config, stop))
        return build_projection(spec, strategy, residual_variances=variances)
    return build_projection(spec, strategy)
