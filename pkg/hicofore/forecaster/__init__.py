# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""MLP mixture forecaster: configuration, network, training, prediction and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .forecaster_cfg import (
    EarlyStoppingCfg,
    MixtureNetworkCfg,
    OptimizerCfg,
    TrainConfig,
    dump_yaml,
    load_cfg_from_registry,
)
from .network import ParameterSet, forward, init_parameters
from .predict import ForecastSet, base_point_forecast, fit_projection, predict_distribution
from .trainer import AdamState, TrainingHistory, adam_step, loss_and_grad, recalibrate, train
