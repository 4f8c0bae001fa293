# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Tests for panel ingestion, splits and synthetic data."""

import numpy as np
import pandas as pd
import pytest

from hicofore.errors import DataError, HierarchyError
from hicofore.hierarchy import aggregate, coherence_residual
from hicofore.pipeline import (
    PanelDataset,
    check_coherent,
    inject_noise,
    load_panel,
    make_biased_base_samples,
    make_split,
    synth_hierarchy,
    synth_mixture_panel,
    write_panel,
)


def _long_frame(ids, values, labels=None) -> pd.DataFrame:
    values = np.asarray(values, dtype=np.float64)
    labels = np.arange(values.shape[1]) if labels is None else labels
    return pd.DataFrame(
        {
            "unique_id": np.repeat(ids, values.shape[1]),
            "ds": np.tile(labels, len(ids)),
            "y": values.reshape(-1),
        }
    )


##
# Ingestion.
##


def test_write_then_load(tmp_path, small_panel):
    spec, dataset = small_panel
    path = tmp_path / "panel.csv"
    write_panel(dataset, path)

    loaded = load_panel(path, spec)
    assert loaded.ids == spec.series_ids
    np.testing.assert_allclose(loaded.values, dataset.values, rtol=1e-12)
    assert check_coherent(spec, loaded) <= 1e-8


def test_load_bottom_only_panel(tmp_path, pair_spec):
    path = tmp_path / "bottoms.csv"
    _long_frame(["b2", "b1"], [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], labels=[2000, 2001, 2002]).to_csv(path, index=False)

    dataset = load_panel(path, pair_spec)
    np.testing.assert_array_equal(dataset.values, [[5.0, 7.0, 9.0], [4.0, 5.0, 6.0], [1.0, 2.0, 3.0]])
    assert (dataset.time_origin, dataset.time_step) == (2000, 1)


def test_load_iso_dates(tmp_path, pair_spec):
    path = tmp_path / "dated.csv"
    dates = ["2021-01-01", "2021-02-01", "2021-03-01"]
    _long_frame(["b1", "b2"], [[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]], labels=dates).to_csv(path, index=False)

    dataset = load_panel(path, pair_spec)
    np.testing.assert_array_equal(dataset.values[0], [1.0, 2.0, 4.0])
    assert dataset.time_origin == 0


def test_load_unsorted_rows(tmp_path, pair_spec):
    path = tmp_path / "shuffled.csv"
    frame = _long_frame(["b1", "b2"], [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]])
    frame.sample(frac=1.0, random_state=0).to_csv(path, index=False)

    np.testing.assert_array_equal(load_panel(path, pair_spec).values[1], [1.0, 2.0, 3.0, 4.0])


def test_load_rejects_incoherent_aggregate(tmp_path, pair_spec):
    path = tmp_path / "incoherent.csv"
    bottoms = np.array([[10.0, 10.0], [20.0, 20.0]])
    full = aggregate(pair_spec, bottoms)
    full[0, 1] *= 1.05
    _long_frame(list(pair_spec.series_ids), full).to_csv(path, index=False)

    with pytest.raises(DataError, match="incoherent input data"):
        load_panel(path, pair_spec)


def test_load_accepts_aggregate_within_tolerance(tmp_path, pair_spec):
    path = tmp_path / "rounded.csv"
    full = aggregate(pair_spec, np.array([[10.0, 10.0], [20.0, 20.0]]))
    full[0] *= 1.0 + 1e-9
    _long_frame(list(pair_spec.series_ids), full).to_csv(path, index=False)

    np.testing.assert_array_equal(load_panel(path, pair_spec).values[0], [30.0, 30.0])


def test_load_rejects_ragged_and_missing(tmp_path, pair_spec):
    frame = _long_frame(["b1", "b2"], [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])

    ragged = tmp_path / "ragged.csv"
    frame.drop(index=5).to_csv(ragged, index=False)
    with pytest.raises(DataError, match="ragged"):
        load_panel(ragged, pair_spec)

    missing = tmp_path / "missing.csv"
    frame[frame["unique_id"] == "b1"].to_csv(missing, index=False)
    with pytest.raises(DataError, match="missing series 'b2'"):
        load_panel(missing, pair_spec)

    gap = tmp_path / "gap.csv"
    frame.assign(y=frame["y"].where(frame.index != 1)).to_csv(gap, index=False)
    with pytest.raises(DataError, match="non-finite"):
        load_panel(gap, pair_spec)

    columns = tmp_path / "columns.csv"
    frame.rename(columns={"y": "value"}).to_csv(columns, index=False)
    with pytest.raises(DataError, match="missing columns"):
        load_panel(columns, pair_spec)


def test_load_ignores_series_outside_hierarchy(tmp_path, pair_spec):
    path = tmp_path / "extra.csv"
    _long_frame(["b1", "b2", "zz"], np.ones((3, 2))).to_csv(path, index=False)

    assert load_panel(path, pair_spec).n_series == 3


def test_panel_windows():
    dataset = PanelDataset(ids=("a",), values=np.arange(10.0).reshape(1, 10))

    np.testing.assert_array_equal(dataset.window(4, 3), [[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(dataset.future(8, 2), [[8.0, 9.0]])
    assert dataset.head(5).length == 5
    with pytest.raises(DataError):
        dataset.window(2, 3)
    with pytest.raises(DataError):
        dataset.future(9, 2)
    with pytest.raises(DataError):
        PanelDataset(ids=("a",), values=np.array([[1.0, np.inf]]))
    with pytest.raises(ValueError):
        dataset.values[0, 0] = 1.0


##
# Splits.
##


def test_make_split_examples():
    split = make_split(100, 12)
    assert (split.train, split.validation, split.test) == ((0, 76), (76, 88), (88, 100))

    tight = make_split(36, 12)
    assert tight.train == (0, 12)

    with pytest.raises(DataError, match="too short"):
        make_split(24, 12)
    with pytest.raises(DataError):
        make_split(10, 0)


##
# Synthetic data.
##


def test_synth_hierarchy_is_coherent_and_deterministic():
    spec, first = synth_hierarchy(6, 48, correlation=0.5, trend=0.1, seed=11)
    _, second = synth_hierarchy(6, 48, correlation=0.5, trend=0.1, seed=11)
    _, other = synth_hierarchy(6, 48, correlation=0.5, trend=0.1, seed=12)

    assert (spec.n_aggregate, spec.n_bottom) == (4, 6)
    np.testing.assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)
    assert coherence_residual(spec, first.values) <= 1e-9 * np.abs(first.values).max()


def test_synth_hierarchy_noise_correlation():
    spec, dataset = synth_hierarchy(3, 20_000, correlation=0.6, seasonal_amplitude=0.0, horizon=1, seed=0)
    bottoms = dataset.bottom_values(spec)

    correlation = np.corrcoef(bottoms)
    off_diagonal = correlation[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off_diagonal, 0.6, atol=0.03)


def test_synth_hierarchy_without_noise_is_deterministic_signal():
    spec, dataset = synth_hierarchy(2, 36, seasonal_amplitude=0.0, noise_scale=0.0, pair_groups=False)

    np.testing.assert_array_equal(dataset.values, np.array([[30.0], [10.0], [20.0]]) * np.ones(36))
    assert spec.n_aggregate == 1


def test_synth_hierarchy_errors():
    with pytest.raises(HierarchyError):
        synth_hierarchy(1, 36)
    with pytest.raises(DataError):
        synth_hierarchy(2, 36, correlation=1.0)
    with pytest.raises(DataError):
        synth_hierarchy(2, 20, horizon=12)


def test_synth_mixture_panel_regimes():
    spec, dataset = synth_mixture_panel(4, 600, n_regimes=3, noise_scale=0.0, seed=5)
    bottoms = dataset.bottom_values(spec)

    # without noise every time step is one of the regime vectors
    assert len(np.unique(bottoms.T, axis=0)) == 3
    assert coherence_residual(spec, dataset.values) <= 1e-9 * np.abs(dataset.values).max()


def test_inject_noise(small_panel):
    spec, dataset = small_panel
    train_stop = make_split(dataset.length, 4).train[1]

    untouched = inject_noise(dataset, spec, 0.0, seed=0, horizon=4)
    np.testing.assert_array_equal(untouched.values, dataset.values)

    corrupted = inject_noise(dataset, spec, 1.0, seed=0, horizon=4)
    bottoms = spec.n_aggregate
    assert np.all(corrupted.values[bottoms:, :train_stop] != dataset.values[bottoms:, :train_stop])
    np.testing.assert_array_equal(corrupted.values[:, train_stop:], dataset.values[:, train_stop:])
    check_coherent(spec, corrupted)
    ratios = corrupted.values[bottoms:, :train_stop] / dataset.values[bottoms:, :train_stop]
    assert np.all((ratios >= 0.1 - 1e-12) & (ratios <= 10.0 + 1e-12))

    assert inject_noise(dataset, spec, 0.3, seed=4, horizon=4).metadata["noise_fraction"] == 0.3
    with pytest.raises(DataError):
        inject_noise(dataset, spec, 1.5, seed=0, horizon=4)


def test_inject_noise_selects_the_requested_fraction():
    spec, dataset = synth_hierarchy(4, 3000, horizon=12, seed=1)
    train_stop = make_split(dataset.length, 12).train[1]

    corrupted = inject_noise(dataset, spec, 0.3, seed=2, horizon=12)
    changed = corrupted.values[spec.n_aggregate :, :train_stop] != dataset.values[spec.n_aggregate :, :train_stop]
    assert changed.mean() == pytest.approx(0.3, abs=0.02)


def test_make_biased_base_samples(pair_spec):
    y = np.array([[10.0, 12.0], [4.0, 5.0], [6.0, 7.0]])

    samples = make_biased_base_samples(pair_spec, y, 20_000, bottom_bias=0.5, noise_scale=0.1, seed=0)
    assert samples.shape == (20_000, 3, 2)
    np.testing.assert_allclose(samples.mean(axis=0), [[10.0, 12.0], [6.0, 7.5], [9.0, 10.5]], atol=0.01)
