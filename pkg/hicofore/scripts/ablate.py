# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Script to sweep one configuration axis over several seeds and record validation sCRPS.

Each cell of the grid trains a fresh model. Without ``--data`` a synthetic hierarchy is generated:
a known 4-regime mixture panel for the mixture axis, and a seasonal panel otherwise.
"""

from __future__ import annotations

import argparse
import copy
import logging
import os

import pandas as pd

from hicofore.errors import ConfigError
from hicofore.forecaster import TrainConfig, train
from hicofore.hierarchy import HierarchySpec
from hicofore.pipeline import PanelDataset, inject_noise, synth_hierarchy, synth_mixture_panel
from hicofore.reconcile import ReconcilerKind
from hicofore.scaling import ScalerKind

# local imports
from hicofore.scripts import cli_args
from hicofore.scripts.train import load_inputs

logger = logging.getLogger(__name__)

AXES = ("mixture", "scaler", "reconciler")
CSV_COLUMNS = ["axis", "value", "noise", "seed", "val_scrps"]

DEFAULT_GRIDS = {
    "mixture": "1,4,32",
    "scaler": ",".join(kind.value for kind in ScalerKind),
    "reconciler": ",".join(kind.value for kind in ReconcilerKind),
}


def add_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("axis", type=str, choices=AXES, help="Configuration axis to sweep.")
    parser.add_argument("--grid", type=str, default=None, help="Comma-separated axis values.")
    parser.add_argument("--noise", type=float, default=0.0, help="Fraction p of training points to rescale.")
    parser.add_argument("--seeds", type=int, default=5, help="Number of training seeds per grid value.")
    parser.add_argument("--data", type=str, default=None, help="Panel CSV; a synthetic panel when omitted.")
    parser.add_argument("--hierarchy", type=str, default=None, help="Hierarchy JSON document for --data.")
    parser.add_argument("--n-bottom", type=int, default=4, help="Bottom series of the synthetic panel.")
    parser.add_argument("--length", type=int, default=240, help="Length of the synthetic panel.")
    parser.add_argument("--data-seed", type=int, default=0, help="Seed of the synthetic panel and the noise.")
    parser.add_argument("--out", type=str, required=True, help="CSV file to write.")
    # append training cli arguments
    cli_args.add_train_args(parser)


def parse_grid(axis: str, grid: str | None) -> list[int | ScalerKind | ReconcilerKind]:
    """Typed grid values for an axis."""
    tokens = [token.strip() for token in (grid or DEFAULT_GRIDS[axis]).split(",") if token.strip()]
    if not tokens:
        raise ConfigError("empty ablation grid")
    try:
        if axis == "mixture":
            return [int(token) for token in tokens]
        if axis == "scaler":
            return [ScalerKind(token) for token in tokens]
        return [ReconcilerKind(token) for token in tokens]
    except ValueError as err:
        raise ConfigError(f"invalid {axis} grid: {err}") from err


def configure(base: TrainConfig, axis: str, value, seed: int) -> TrainConfig:
    cfg = copy.deepcopy(base)
    cfg.seed = seed
    if axis == "mixture":
        cfg.network.num_components = int(value)
    elif axis == "scaler":
        cfg.scaler = ScalerKind(value)
    else:
        cfg.reconciler = ReconcilerKind(value)
    return cfg.validate()


def run_ablation(
    axis: str,
    grid: list,
    dataset: PanelDataset,
    spec: HierarchySpec,
    base: TrainConfig,
    seeds: int,
    noise: float = 0.0,
    noise_seed: int = 0,
    progress: bool = False,
) -> pd.DataFrame:
    """Best validation sCRPS of every (value, seed) cell, one row per cell."""
    if noise > 0.0:
        dataset = inject_noise(dataset, spec, noise, seed=noise_seed, horizon=base.horizon)
    rows = []
    for value in grid:
        for seed in range(seeds):
            cfg = configure(base, axis, value, seed)
            _, history = train(dataset, spec, cfg, progress=progress)
            label = value.value if hasattr(value, "value") else value
            rows.append({"axis": axis, "value": label, "noise": noise, "seed": seed, "val_scrps": history.best_score})
            logger.info("%s=%s seed=%d: validation sCRPS %.6f", axis, label, seed, history.best_score)
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def summarize(frame: pd.DataFrame) -> pd.Series:
    """Median validation sCRPS per grid value, in grid order."""
    return frame.groupby("value", sort=False)["val_scrps"].median()


def main(args_cli: argparse.Namespace) -> int:
    base = cli_args.parse_train_cfg(args_cli)
    if args_cli.data is not None:
        if args_cli.hierarchy is None:
            raise ConfigError("--data needs --hierarchy")
        spec, dataset = load_inputs(args_cli.data, args_cli.hierarchy)
    elif args_cli.axis == "mixture":
        spec, dataset = synth_mixture_panel(
            args_cli.n_bottom, args_cli.length, horizon=base.horizon, seed=args_cli.data_seed
        )
    else:
        spec, dataset = synth_hierarchy(
            args_cli.n_bottom, args_cli.length, correlation=0.3, horizon=base.horizon, seed=args_cli.data_seed
        )

    grid = parse_grid(args_cli.axis, args_cli.grid)
    print(f"[INFO] Sweeping {args_cli.axis} over {len(grid)} values x {args_cli.seeds} seeds")
    frame = run_ablation(
        args_cli.axis,
        grid,
        dataset,
        spec,
        base,
        args_cli.seeds,
        noise=args_cli.noise,
        noise_seed=args_cli.data_seed,
        progress=not args_cli.quiet,
    )
    os.makedirs(os.path.dirname(os.path.abspath(args_cli.out)), exist_ok=True)
    frame.to_csv(args_cli.out, index=False)
    for value, median in summarize(frame).items():
        logger.info("median validation sCRPS %s=%s: %.6f", args_cli.axis, value, median)
    print(f"[INFO] Wrote {len(frame)} rows to: {args_cli.out}")
    return 0
