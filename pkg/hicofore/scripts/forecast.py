# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Script to draw a coherent forecast distribution from a trained checkpoint."""

from __future__ import annotations

import argparse
import json
import os

from hicofore.errors import ConfigError
from hicofore.evaluate import DEFAULT_Q_GRID
from hicofore.forecaster import Checkpoint, fit_projection, load_checkpoint, predict_distribution
from hicofore.pipeline import PanelDataset, load_panel

# local imports
from hicofore.scripts import cli_args


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--model", type=str, required=True, help="Checkpoint written by 'hicofore train'.")
    parser.add_argument("--data", type=str, default=None, help="Panel CSV; defaults to the training data.")
    parser.add_argument("--n-samples", type=int, default=1000, help="Number of reconciled samples.")
    parser.add_argument("--seed", type=int, default=None, help="Sampling seed; defaults to the training seed.")
    parser.add_argument("--origin", type=int, default=None, help="First forecast column; defaults to the panel end.")
    parser.add_argument("--q-grid", type=int, default=None, help="Number of equispaced quantile levels.")
    parser.add_argument("--include-samples", action="store_true", default=False, help="Write every sample.")
    parser.add_argument("--out", type=str, required=True, help="Forecast JSON file to write.")


def load_model_data(model_path: str, data_path: str | None) -> tuple[Checkpoint, PanelDataset]:
    checkpoint = load_checkpoint(model_path)
    data_path = data_path or checkpoint.data_path
    if data_path is None:
        raise ConfigError("the checkpoint records no data path; pass --data")
    return checkpoint, load_panel(data_path, checkpoint.spec)


def main(args_cli: argparse.Namespace) -> int:
    checkpoint, dataset = load_model_data(args_cli.model, args_cli.data)
    origin = dataset.length if args_cli.origin is None else args_cli.origin
    q_grid = cli_args.parse_q_grid(args_cli.q_grid)
    seed = checkpoint.config.seed if args_cli.seed is None else args_cli.seed

    projection = fit_projection(checkpoint.params, dataset, checkpoint.spec, checkpoint.config, origin)
    forecast = predict_distribution(
        checkpoint.params,
        dataset,
        checkpoint.spec,
        checkpoint.config,
        n_samples=args_cli.n_samples,
        seed=seed,
        projection=projection,
        origin=origin,
        q_grid=DEFAULT_Q_GRID if q_grid is None else q_grid,
    )
    os.makedirs(os.path.dirname(os.path.abspath(args_cli.out)), exist_ok=True)
    with open(args_cli.out, "w", encoding="utf-8") as file:
        json.dump(forecast.to_dict(include_samples=args_cli.include_samples), file, indent=1)
    print(f"[INFO] Wrote {args_cli.n_samples} reconciled samples from origin {origin} to: {args_cli.out}")
    return 0
