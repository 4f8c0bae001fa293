# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""End-to-end runs of the ``hicofore`` subcommands on a small synthetic panel."""

import json

import numpy as np
import pandas as pd
import pytest
import yaml

from hicofore.errors import ConfigError
from hicofore.forecaster import load_checkpoint
from hicofore.hierarchy import serialize_hierarchy_spec
from hicofore.pipeline import write_panel
from hicofore.scripts import cli_args
from hicofore.scripts.ablate import CSV_COLUMNS, parse_grid
from hicofore.scripts.main import build_parser, main


@pytest.fixture
def inputs(tmp_path, small_panel):
    spec, dataset = small_panel
    data_path, hierarchy_path = tmp_path / "panel.csv", tmp_path / "hierarchy.json"
    write_panel(dataset, data_path)
    hierarchy_path.write_text(serialize_hierarchy_spec(spec), encoding="utf-8")
    return str(data_path), str(hierarchy_path)


def _train(inputs, out, *extra) -> int:
    data_path, hierarchy_path = inputs
    argv = ["train", "--data", data_path, "--hierarchy", hierarchy_path, "--out", str(out), "--cfg", "smoke"]
    return main(argv + ["--quiet", *extra])


def test_train_forecast_evaluate(tmp_path, inputs, small_panel, capsys):
    spec, _ = small_panel
    model = tmp_path / "run" / "model.json"

    assert _train(inputs, model) == 0
    checkpoint = load_checkpoint(model)
    assert checkpoint.spec == spec
    assert checkpoint.metadata["recalibrated"] is False
    with open(tmp_path / "run" / "params" / "train.yaml", encoding="utf-8") as file:
        assert yaml.safe_load(file)["network"]["hidden_size"] == 16

    forecast_path = tmp_path / "forecast.json"
    argv = ["forecast", "--model", str(model), "--n-samples", "200", "--q-grid", "9", "--out", str(forecast_path)]
    assert main(argv) == 0
    forecast = json.loads(forecast_path.read_text(encoding="utf-8"))
    assert forecast["n_samples"] == 200 and forecast["horizon"] == 4
    assert list(forecast["series"]) == list(spec.series_ids)
    assert len(forecast["series"]["Total"]["quantiles"]) == 9
    total_mean = np.array(forecast["series"]["Total"]["mean"])
    bottom_means = np.array([forecast["series"][bottom]["mean"] for bottom in spec.bottom_ids])
    np.testing.assert_allclose(total_mean, bottom_means.sum(axis=0), rtol=1e-9)

    report_path = tmp_path / "report.json"
    assert main(["evaluate", "--model", str(model), "--n-samples", "200", "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert set(report["per_level"]) == {"0", "1", "2"}
    assert report["overall"]["scrps"] > 0.0
    assert report["metadata"]["n_samples"] == 200
    assert "overall" in capsys.readouterr().out


def test_train_is_deterministic(tmp_path, inputs):
    first, second = tmp_path / "a" / "model.json", tmp_path / "b" / "model.json"

    assert _train(inputs, first, "--seed", "7") == 0
    assert _train(inputs, second, "--seed", "7") == 0
    assert first.read_bytes() == second.read_bytes()


def test_train_with_recalibration(tmp_path, inputs):
    model = tmp_path / "model.json"

    assert _train(inputs, model, "--recalibrate", "--max-steps", "20") == 0
    assert load_checkpoint(model).metadata["recalibrated"] is True


def test_ablate_writes_one_row_per_cell(tmp_path):
    out = tmp_path / "ablate.csv"
    argv = ["ablate", "scaler", "--grid", "robust,minmax", "--seeds", "2", "--length", "60", "--cfg", "smoke"]
    assert main(argv + ["--max-steps", "20", "--noise", "0.1", "--out", str(out), "--quiet"]) == 0

    frame = pd.read_csv(out)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 4
    assert list(frame["value"]) == ["robust", "robust", "minmax", "minmax"]
    assert np.all(np.isfinite(frame["val_scrps"]))


def test_library_errors_exit_with_status_one(tmp_path, inputs):
    data_path, _ = inputs
    bad_hierarchy = tmp_path / "bad.json"
    bad_hierarchy.write_text('{"bottom": ["b0", "b1"], "aggregates": [{"id": "T", "children": [5]}]}', encoding="utf-8")

    argv = ["train", "--data", data_path, "--hierarchy", str(bad_hierarchy), "--out", str(tmp_path / "m.json")]
    assert main(argv + ["--cfg", "smoke", "--quiet"]) == 1


def test_invalid_override_exits_with_status_one(tmp_path, inputs):
    assert _train(inputs, tmp_path / "model.json", "--max-steps", "0") == 1


def test_forecast_without_samples_exits_with_status_one(tmp_path, inputs):
    model = tmp_path / "model.json"
    assert _train(inputs, model, "--max-steps", "20") == 0

    argv = ["forecast", "--model", str(model), "--n-samples", "0", "--out", str(tmp_path / "forecast.json")]
    assert main(argv) == 1
    assert not (tmp_path / "forecast.json").exists()


def test_parser_overrides():
    args = build_parser().parse_args(
        ["train", "--data", "d.csv", "--hierarchy", "h.json", "--out", "m.json", "--cfg", "smoke", "--k", "3"]
        + ["--scaler", "minmax", "--reconciler", "bottom_up", "--lr", "0.01", "--likelihood", "joint"]
    )
    cfg = cli_args.parse_train_cfg(args)

    assert cfg.network.num_components == 3
    assert cfg.scaler.value == "minmax"
    assert cfg.reconciler.value == "bottom_up"
    assert cfg.optimizer.learning_rate == 0.01
    assert cfg.optimizer.likelihood == "joint"
    assert cfg.optimizer.max_steps == 60


def test_parse_helpers():
    np.testing.assert_allclose(cli_args.parse_q_grid(3), [0.25, 0.5, 0.75])
    assert cli_args.parse_q_grid(None) is None
    with pytest.raises(ConfigError):
        cli_args.parse_q_grid(0)

    assert parse_grid("mixture", "1, 4,32") == [1, 4, 32]
    assert len(parse_grid("reconciler", None)) == 4
    with pytest.raises(ConfigError):
        parse_grid("scaler", "robust,layer")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("hicofore ")
