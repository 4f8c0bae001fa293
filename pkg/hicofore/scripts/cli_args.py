# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import argparse
import logging
import os

import numpy as np
import torch

from hicofore.errors import ConfigError
from hicofore.forecaster.forecaster_cfg import LIKELIHOODS, TrainConfig, load_cfg_from_registry
from hicofore.reconcile import ReconcilerKind
from hicofore.scaling import ScalerKind


def add_common_args(parser: argparse.ArgumentParser):
    """Add logging arguments shared by every subcommand.

    Args:
        parser: The parser to add the arguments to.
    """
    arg_group = parser.add_argument_group("output", description="Logging and progress output.")
    arg_group.add_argument(
        "--log-level", type=str, default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level."
    )
    arg_group.add_argument("--quiet", action="store_true", default=False, help="Disable progress bars.")


def add_train_args(parser: argparse.ArgumentParser):
    """Add training arguments to the parser.

    Every argument defaults to ``None`` so that only flags given on the command line override the
    registered configuration.

    Args:
        parser: The parser to add the arguments to.
    """
    # create a new argument group
    arg_group = parser.add_argument_group("training", description="Arguments for the mixture forecaster.")
    # -- configuration entry
    arg_group.add_argument(
        "--cfg", type=str, default="default", help="Registered configuration name or path to a YAML file."
    )
    # -- model arguments
    arg_group.add_argument("--horizon", type=int, default=None, help="Forecast horizon H.")
    arg_group.add_argument(
        "--scaler", type=str, default=None, choices=[k.value for k in ScalerKind], help="TemporalNorm variant."
    )
    arg_group.add_argument(
        "--reconciler", type=str, default=None, choices=[k.value for k in ReconcilerKind], help="Reconciliation strategy."
    )
    arg_group.add_argument("--k", type=int, default=None, help="Number of mixture components N_k.")
    arg_group.add_argument("--input-multiplier", type=int, default=None, help="Input window length is m * H.")
    arg_group.add_argument("--seed", type=int, default=None, help="Seed for initialization, batching and sampling.")
    # -- optimizer arguments
    arg_group.add_argument("--lr", type=float, default=None, help="ADAM learning rate.")
    arg_group.add_argument("--lr-decays", type=int, default=None, help="Number of learning rate decays.")
    arg_group.add_argument("--max-steps", type=int, default=None, help="Maximum number of training steps.")
    arg_group.add_argument("--batch-size", type=int, default=None, help="Series per composite batch.")
    arg_group.add_argument("--likelihood", type=str, default=None, choices=LIKELIHOODS, help="Training likelihood.")
    # -- early stopping arguments
    arg_group.add_argument("--eval-interval", type=int, default=None, help="Steps between validation evaluations.")
    arg_group.add_argument("--patience", type=int, default=None, help="Evaluations without improvement before stopping.")


def parse_train_cfg(args_cli: argparse.Namespace) -> TrainConfig:
    """Parse the training configuration based on inputs.

    Args:
        args_cli: The command line arguments.

    Returns:
        The registered configuration with CLI overrides applied and validated.
    """
    # load the default configuration
    cfg = load_cfg_from_registry(args_cli.cfg)

    # override the default configuration with CLI arguments
    if args_cli.horizon is not None:
        cfg.horizon = args_cli.horizon
    if args_cli.scaler is not None:
        cfg.scaler = ScalerKind(args_cli.scaler)
    if args_cli.reconciler is not None:
        cfg.reconciler = ReconcilerKind(args_cli.reconciler)
    if args_cli.k is not None:
        cfg.network.num_components = args_cli.k
    if args_cli.input_multiplier is not None:
        cfg.network.input_multiplier = args_cli.input_multiplier
    if args_cli.seed is not None:
        cfg.seed = args_cli.seed
    if args_cli.lr is not None:
        cfg.optimizer.learning_rate = args_cli.lr
    if args_cli.lr_decays is not None:
        cfg.optimizer.num_lr_decays = args_cli.lr_decays
    if args_cli.max_steps is not None:
        cfg.optimizer.max_steps = args_cli.max_steps
    if args_cli.batch_size is not None:
        cfg.optimizer.batch_size = args_cli.batch_size
    if args_cli.likelihood is not None:
        cfg.optimizer.likelihood = args_cli.likelihood
    if args_cli.eval_interval is not None:
        cfg.early_stopping.eval_interval = args_cli.eval_interval
    if args_cli.patience is not None:
        cfg.early_stopping.patience = args_cli.patience

    return cfg.validate()


def parse_q_grid(size: int | None) -> np.ndarray | None:
    """Equispaced quantile levels ``1/(size+1), ..., size/(size+1)``; ``None`` keeps the default grid."""
    if size is None:
        return None
    if size < 1:
        raise ConfigError(f"--q-grid needs at least one level, got {size}")
    return np.linspace(1.0, size, size) / (size + 1)


def setup_logging(args_cli: argparse.Namespace):
    """Configure root logging and cap torch threads from ``HICOFORE_THREADS``."""
    logging.basicConfig(level=getattr(logging, args_cli.log_level), format="[%(levelname)s] %(name)s: %(message)s")
    threads = os.environ.get("HICOFORE_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError as err:
            raise ConfigError(f"HICOFORE_THREADS must be an integer, got '{threads}'") from err
