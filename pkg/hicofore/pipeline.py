# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Panel data ingestion, deterministic splits and synthetic hierarchies.

Every dataset produced here is coherent: aggregate rows are recomputed from the bottom rows
after any mutation.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import DataError, HierarchyError
from .hierarchy import HierarchySpec, aggregate, coherence_residual

logger = logging.getLogger(__name__)

AGGREGATE_RTOL = 1e-6
"""Relative tolerance when checking aggregate rows read from file."""


@dataclass(frozen=True)
class PanelDataset:
    """Values of every series of a hierarchy on a common integer time grid.

    Attributes:
        ids: Series ids in hierarchy order (aggregates then bottoms).
        values: Matrix of shape ``(N_i, T)``.
        time_origin: Integer label of the first column.
        time_step: Label increment between columns.
    """

    ids: tuple[str, ...]
    values: np.ndarray
    time_origin: int = 0
    time_step: int = 1
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise DataError(f"values of shape {self.values.shape} do not match {len(self.ids)} ids")
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite values in panel")
        self.values.setflags(write=False)

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def window(self, origin: int, length: int) -> np.ndarray:
        """The ``length`` observations strictly before ``origin``, shape ``(N_i, length)``."""
        if origin - length < 0 or origin > self.length:
            raise DataError(f"window of {length} before {origin} falls outside [0, {self.length})")
        return self.values[:, origin - length : origin]

    def future(self, origin: int, horizon: int) -> np.ndarray:
        """The ``horizon`` observations from ``origin`` on, shape ``(N_i, horizon)``."""
        if origin < 0 or origin + horizon > self.length:
            raise DataError(f"horizon of {horizon} from {origin} falls outside [0, {self.length})")
        return self.values[:, origin : origin + horizon]

    def bottom_values(self, spec: HierarchySpec) -> np.ndarray:
        return self.values[spec.n_aggregate :]

    def head(self, stop: int) -> PanelDataset:
        """Dataset truncated to the first ``stop`` observations."""
        return replace(self, values=np.array(self.values[:, :stop]))


@dataclass(frozen=True)
class SplitPlan:
    """Train, validation and test ranges as half-open ``(start, stop)`` pairs."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]


def _from_bottoms(spec: HierarchySpec, bottoms: np.ndarray, **kwargs) -> PanelDataset:
    return PanelDataset(ids=spec.series_ids, values=aggregate(spec, bottoms), **kwargs)


##
# Ingestion.
##


def _ordinal_positions(ds: pd.Series) -> tuple[pd.Series, int, int]:
    """Map a ``ds`` column to positions 0..T-1; return positions and the integer origin/step."""
    is_integer = pd.api.types.is_integer_dtype(ds)
    if is_integer:
        keys = ds.to_numpy(dtype=np.int64)
    else:
        try:
            keys = pd.to_datetime(ds).to_numpy()
        except (ValueError, TypeError) as err:
            raise DataError(f"'ds' must hold integers or ISO-8601 dates: {err}") from err
    uniques = np.unique(keys)
    positions = pd.Series(np.searchsorted(uniques, keys), index=ds.index)
    origin, step = 0, 1
    if is_integer and len(uniques) >= 1:
        origin = int(uniques[0])
        step = int(uniques[1] - uniques[0]) if len(uniques) > 1 else 1
        if not np.array_equal(uniques, origin + step * np.arange(len(uniques))):
            raise DataError("integer 'ds' values must lie on a regular grid")
    return positions, origin, step


def load_panel(csv_path: str | os.PathLike, spec: HierarchySpec) -> PanelDataset:
    """Read a long-format panel (``unique_id,ds,y``) aligned to a hierarchy.

    Bottom series are read from the file; aggregate series are recomputed by summation and, when
    present in the file, checked against the recomputed values.

    Raises:
        DataError: On missing series, ragged lengths, gaps or incoherent aggregate rows.
    """
    frame = pd.read_csv(csv_path, dtype={"unique_id": str})
    missing_columns = {"unique_id", "ds", "y"} - set(frame.columns)
    if missing_columns:
        raise DataError(f"panel is missing columns {sorted(missing_columns)}")
    frame["position"], origin, step = _ordinal_positions(frame["ds"])
    n_steps = int(frame["position"].max()) + 1 if len(frame) else 0

    unknown = set(frame["unique_id"]) - set(spec.series_ids)
    if unknown:
        logger.warning("ignoring %d series not in the hierarchy: %s", len(unknown), sorted(unknown)[:5])

    grouped = {uid: rows for uid, rows in frame.groupby("unique_id", sort=False)}
    bottoms = np.empty((spec.n_bottom, n_steps), dtype=np.float64)
    for row, bottom_id in enumerate(spec.bottom_ids):
        if bottom_id not in grouped:
            raise DataError(f"missing series '{bottom_id}'")
        rows = grouped[bottom_id]
        if len(rows) != n_steps or rows["position"].nunique() != n_steps:
            raise DataError(f"ragged lengths: series '{bottom_id}' has {len(rows)} rows, expected {n_steps}")
        values = rows.sort_values("position")["y"].to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise DataError(f"missing or non-finite values in series '{bottom_id}'")
        bottoms[row] = values

    dataset = _from_bottoms(spec, bottoms, time_origin=origin, time_step=step)
    for row, (agg_id, _) in enumerate(spec.aggregates):
        if agg_id not in grouped:
            continue
        rows = grouped[agg_id].sort_values("position")
        if len(rows) != n_steps:
            raise DataError(f"ragged lengths: series '{agg_id}' has {len(rows)} rows, expected {n_steps}")
        declared = rows["y"].to_numpy(dtype=np.float64)
        computed = dataset.values[row]
        if np.any(np.abs(declared - computed) > AGGREGATE_RTOL * np.maximum(np.abs(computed), 1.0)):
            raise DataError(f"incoherent input data: aggregate '{agg_id}' does not equal the sum of its children")
    logger.info("loaded panel %s: %d series x %d steps", csv_path, dataset.n_series, dataset.length)
    return dataset


def write_panel(dataset: PanelDataset, csv_path: str | os.PathLike) -> None:
    """Write a dataset in long format with integer ``ds`` labels."""
    labels = dataset.time_origin + dataset.time_step * np.arange(dataset.length)
    frame = pd.DataFrame(
        {
            "unique_id": np.repeat(np.asarray(dataset.ids, dtype=object), dataset.length),
            "ds": np.tile(labels, dataset.n_series),
            "y": dataset.values.reshape(-1),
        }
    )
    frame.to_csv(csv_path, index=False)


def make_split(T: int, H: int) -> SplitPlan:
    """Train ``[0, T-2H)``, validation ``[T-2H, T-H)`` and test ``[T-H, T)``."""
    if H < 1:
        raise DataError("horizon must be at least 1")
    if T < 3 * H:
        raise DataError(f"series of length {T} is too short for horizon {H} (needs T >= {3 * H})")
    return SplitPlan(train=(0, T - 2 * H), validation=(T - 2 * H, T - H), test=(T - H, T))


##
# Synthetic data.
##


def _pair_hierarchy(n_bottom: int, pair_groups: bool) -> HierarchySpec:
    bottom_ids = tuple(f"b{i}" for i in range(n_bottom))
    aggregates = [("Total", tuple(range(n_bottom)))]
    levels = [0]
    if pair_groups and n_bottom >= 4:
        for start in range(0, n_bottom, 2):
            aggregates.append((f"g{start // 2}", tuple(range(start, min(start + 2, n_bottom)))))
            levels.append(1)
    bottom_level = max(levels) + 1
    return HierarchySpec(bottom_ids=bottom_ids, aggregates=tuple(aggregates), levels=tuple(levels) + (bottom_level,) * n_bottom)


def synth_hierarchy(
    n_bottom: int,
    T: int,
    correlation: float = 0.0,
    level: float = 10.0,
    trend: float = 0.0,
    seasonal_amplitude: float = 1.0,
    season_length: int = 12,
    noise_scale: float = 1.0,
    pair_groups: bool = True,
    horizon: int = 12,
    seed: int = 0,
) -> tuple[HierarchySpec, PanelDataset]:
    """Generate a coherent synthetic hierarchy.

    Bottom series ``b`` follow ``level * (b + 1) + trend * t + A sin(2 pi t / season + phase_b)``
    plus equicorrelated Gaussian noise built from a shared factor, so pairwise noise correlation
    is ``correlation``. The hierarchy has a total and, with ``pair_groups``, one aggregate per
    consecutive pair of bottoms.
    """
    if n_bottom < 2:
        raise HierarchyError("synthetic hierarchies need at least two bottom series")
    if not 0.0 <= correlation < 1.0:
        raise DataError(f"correlation must lie in [0, 1), got {correlation}")
    if T < 3 * horizon:
        raise DataError(f"series of length {T} is too short for horizon {horizon}")
    rng = np.random.default_rng(seed)
    spec = _pair_hierarchy(n_bottom, pair_groups)

    t = np.arange(T, dtype=np.float64)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_bottom, 1))
    base = level * (np.arange(n_bottom, dtype=np.float64)[:, None] + 1.0) + trend * t
    seasonal = seasonal_amplitude * np.sin(2.0 * np.pi * t / season_length + phases)
    factor = rng.standard_normal(T)
    idiosyncratic = rng.standard_normal((n_bottom, T))
    noise = noise_scale * (np.sqrt(correlation) * factor + np.sqrt(1.0 - correlation) * idiosyncratic)
    dataset = _from_bottoms(spec, base + seasonal + noise, metadata={"generator": "synth_hierarchy", "seed": seed})
    return spec, dataset


def synth_mixture_panel(
    n_bottom: int,
    T: int,
    n_regimes: int = 4,
    regime_spread: float = 4.0,
    noise_scale: float = 0.25,
    level: float = 10.0,
    horizon: int = 12,
    seed: int = 0,
) -> tuple[HierarchySpec, PanelDataset]:
    """Hierarchy whose bottoms are driven by a known ``n_regimes``-component mixture.

    At every time step one regime is drawn and shared by all series; each regime shifts every
    bottom by its own offset. The joint distribution of a time step is therefore exactly a
    Gaussian mixture with ``n_regimes`` components and shared component index.
    """
    if T < 3 * horizon:
        raise DataError(f"series of length {T} is too short for horizon {horizon}")
    rng = np.random.default_rng(seed)
    spec = _pair_hierarchy(n_bottom, pair_groups=True)
    offsets = regime_spread * rng.standard_normal((n_regimes, n_bottom))
    regimes = rng.integers(0, n_regimes, size=T)
    base = level * (np.arange(n_bottom, dtype=np.float64)[:, None] + 1.0)
    bottoms = base + offsets[regimes].T + noise_scale * rng.standard_normal((n_bottom, T))
    return spec, _from_bottoms(spec, bottoms, metadata={"generator": "synth_mixture_panel", "seed": seed})


def inject_noise(dataset: PanelDataset, spec: HierarchySpec, fraction: float, seed: int, horizon: int) -> PanelDataset:
    """Scale a random fraction of training observations of every bottom series.

    Each training-range bottom observation is selected with probability ``fraction`` and
    multiplied by a factor drawn log-uniformly in ``[0.1, 10]``. Aggregates are recomputed;
    validation and test values are left untouched.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DataError(f"noise fraction must lie in [0, 1], got {fraction}")
    train_stop = make_split(dataset.length, horizon).train[1]
    values = np.array(dataset.values)
    if fraction == 0.0:
        return replace(dataset, values=values)
    rng = np.random.default_rng(seed)
    bottoms = values[spec.n_aggregate :, :train_stop]
    selected = rng.random(bottoms.shape) < fraction
    factors = np.exp(rng.uniform(np.log(0.1), np.log(10.0), size=bottoms.shape))
    bottoms = np.where(selected, bottoms * factors, bottoms)
    values[:, :train_stop] = aggregate(spec, bottoms)
    logger.debug("injected noise into %d of %d training points", int(selected.sum()), selected.size)
    return replace(dataset, values=values, metadata={**dataset.metadata, "noise_fraction": fraction})


def make_biased_base_samples(
    spec: HierarchySpec,
    y_true: np.ndarray,
    n_samples: int,
    bottom_bias: float = 0.2,
    aggregate_bias: float = 0.0,
    noise_scale: float = 1.0,
    seed: int = 0,
) -> np.ndarray:
    """Incoherent base samples around ``y_true`` with systematic relative biases.

    Bottom rows are shifted by ``bottom_bias * |y|`` and aggregate rows by
    ``aggregate_bias * |y|``; each row gets independent Gaussian noise of scale ``noise_scale``.

    Returns:
        Samples of shape ``(n_samples, N_i, h)``.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    rng = np.random.default_rng(seed)
    bias = np.empty_like(y_true)
    bias[: spec.n_aggregate] = aggregate_bias * np.abs(y_true[: spec.n_aggregate])
    bias[spec.n_aggregate :] = bottom_bias * np.abs(y_true[spec.n_aggregate :])
    noise = noise_scale * rng.standard_normal((n_samples,) + y_true.shape)
    return y_true + bias + noise


def check_coherent(spec: HierarchySpec, dataset: PanelDataset) -> float:
    """Coherence residual of a dataset, raising when it exceeds the relative tolerance."""
    residual = coherence_residual(spec, dataset.values)
    if residual > 1e-8 * (1.0 + float(np.max(np.abs(dataset.values)))):
        raise DataError(f"incoherent input data (residual {residual:.3g})")
    return residual
