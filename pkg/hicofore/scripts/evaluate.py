# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Script to score a trained checkpoint on the test window of its panel."""

from __future__ import annotations

import argparse
import json
import os

from hicofore.evaluate import DEFAULT_Q_GRID, evaluate, format_report, naive_forecast, report_to_dict
from hicofore.forecaster import fit_projection, predict_distribution
from hicofore.pipeline import make_split

# local imports
from hicofore.scripts import cli_args
from hicofore.scripts.forecast import load_model_data


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--model", type=str, required=True, help="Checkpoint written by 'hicofore train'.")
    parser.add_argument("--data", type=str, default=None, help="Panel CSV; defaults to the training data.")
    parser.add_argument("--n-samples", type=int, default=1000, help="Number of reconciled samples.")
    parser.add_argument("--seed", type=int, default=None, help="Sampling seed; defaults to the training seed.")
    parser.add_argument("--q-grid", type=int, default=None, help="Number of equispaced quantile levels.")
    parser.add_argument("--out", type=str, required=True, help="Report JSON file to write.")


def main(args_cli: argparse.Namespace) -> int:
    checkpoint, dataset = load_model_data(args_cli.model, args_cli.data)
    config = checkpoint.config
    split = make_split(dataset.length, config.horizon)
    origin = split.test[0]
    q_grid = cli_args.parse_q_grid(args_cli.q_grid)
    seed = config.seed if args_cli.seed is None else args_cli.seed

    projection = fit_projection(checkpoint.params, dataset, checkpoint.spec, config, origin)
    forecast = predict_distribution(
        checkpoint.params,
        dataset,
        checkpoint.spec,
        config,
        n_samples=args_cli.n_samples,
        seed=seed,
        projection=projection,
        origin=origin,
        q_grid=DEFAULT_Q_GRID if q_grid is None else q_grid,
    )
    y_true = dataset.future(origin, config.horizon)
    y_naive = naive_forecast(dataset.values[:, :origin], config.horizon)
    report = evaluate(forecast, y_true, checkpoint.spec, y_naive)
    report.metadata["recalibrated"] = bool(checkpoint.metadata.get("recalibrated", False))

    os.makedirs(os.path.dirname(os.path.abspath(args_cli.out)), exist_ok=True)
    with open(args_cli.out, "w", encoding="utf-8") as file:
        json.dump(report_to_dict(report), file, indent=1)
    print(format_report(report))
    print(f"[INFO] Wrote report to: {args_cli.out}")
    return 0
