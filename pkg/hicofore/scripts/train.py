# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Script to train the mixture forecaster on a hierarchical panel."""

from __future__ import annotations

import argparse
import os

from hicofore.forecaster import Checkpoint, dump_yaml, recalibrate, save_checkpoint, train
from hicofore.hierarchy import HierarchySpec, parse_hierarchy_spec
from hicofore.pipeline import PanelDataset, load_panel

# local imports
from hicofore.scripts import cli_args


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--data", type=str, required=True, help="Long-format panel CSV (unique_id,ds,y).")
    parser.add_argument("--hierarchy", type=str, required=True, help="Hierarchy JSON document.")
    parser.add_argument("--out", type=str, required=True, help="Checkpoint file to write.")
    parser.add_argument(
        "--recalibrate",
        action="store_true",
        default=False,
        help="Retrain on train and validation for the best step count before saving.",
    )
    # append training cli arguments
    cli_args.add_train_args(parser)


def load_inputs(data_path: str, hierarchy_path: str) -> tuple[HierarchySpec, PanelDataset]:
    with open(hierarchy_path, encoding="utf-8") as file:
        spec = parse_hierarchy_spec(file.read())
    return spec, load_panel(data_path, spec)


def main(args_cli: argparse.Namespace) -> int:
    """Train with the registered configuration and CLI overrides."""
    # parse configuration
    train_cfg = cli_args.parse_train_cfg(args_cli)
    spec, dataset = load_inputs(args_cli.data, args_cli.hierarchy)
    print(f"[INFO] Loaded {dataset.n_series} series of length {dataset.length} from: {args_cli.data}")

    # run training
    params, history = train(dataset, spec, train_cfg, progress=not args_cli.quiet)
    print(f"[INFO] Best validation sCRPS {history.best_score:.6f} at step {history.best_step}")
    metadata = {"validation_scrps": history.best_score, "recalibrated": False}
    if args_cli.recalibrate:
        params, _ = recalibrate(dataset, spec, train_cfg, steps=history.best_step, progress=not args_cli.quiet)
        metadata["recalibrated"] = True

    # save the checkpoint and dump the configuration next to it
    checkpoint = Checkpoint(
        params=params, config=train_cfg, spec=spec, data_path=args_cli.data, history=history, metadata=metadata
    )
    save_checkpoint(args_cli.out, checkpoint)
    dump_yaml(os.path.join(os.path.dirname(os.path.abspath(args_cli.out)), "params", "train.yaml"), train_cfg)
    print(f"[INFO] Saved checkpoint to: {os.path.abspath(args_cli.out)}")
    return 0
