# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Composite-likelihood training of the mixture forecaster.

Every step draws one composite batch of series and a set of forecast origins from the train
range. The batch's joint mixture NLL is evaluated on denormalized parameters, differentiated by
autograd and fed to ADAM. Validation sCRPS on bootstrap-reconciled samples drives early stopping.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import torch
from tqdm import tqdm

from ..errors import DataError, NonFiniteError
from ..evaluate import scrps
from ..hierarchy import HierarchySpec
from ..mixture import joint_nll, univariate_nll
from ..pipeline import PanelDataset, make_split
from ..scaling import ScalerStats, denormalize_mixture, fit_scaler, normalize
from .forecaster_cfg import TrainConfig
from .network import ParameterSet, forward, init_parameters, revin_affine
from .predict import fit_projection, predict_distribution

logger = logging.getLogger(__name__)

VALIDATION_SEED_OFFSET = 1009
"""Validation samples are drawn with ``config.seed + VALIDATION_SEED_OFFSET`` at every evaluation."""


@dataclass(frozen=True)
class TrainingBatch:
    """One composite batch: a block of series observed at several forecast origins.

    Attributes:
        series: Row indices of the batch's series in the panel.
        origins: First forecast step of each window.
        inputs: Input windows of shape ``(W, B, L)``.
        targets: Future values of shape ``(W, B, H)``.
        ids: Series ids, used in diagnostics.
    """

    series: tuple[int, ...]
    origins: tuple[int, ...]
    inputs: torch.Tensor
    targets: torch.Tensor
    ids: tuple[str, ...] = ()


@dataclass
class AdamState:
    """First and second moment estimates and the number of updates taken."""

    step: int
    m: torch.Tensor
    v: torch.Tensor

    @classmethod
    def zeros(cls, numel: int) -> AdamState:
        return cls(step=0, m=torch.zeros(numel, dtype=torch.float64), v=torch.zeros(numel, dtype=torch.float64))


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss: float
    normalized_loss: float
    """Loss with the ``H * sum(log b)`` change-of-variables term removed."""
    learning_rate: float


@dataclass(frozen=True)
class EvalRecord:
    step: int
    val_scrps: float
    learning_rate: float


@dataclass
class TrainingHistory:
    """Per-step losses, validation evaluations and the early-stopping outcome."""

    steps: list[StepRecord] = field(default_factory=list)
    evaluations: list[EvalRecord] = field(default_factory=list)
    best_step: int = 0
    best_score: float = math.inf
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "steps": [[r.step, r.loss, r.normalized_loss, r.learning_rate] for r in self.steps],
            "evaluations": [[r.step, r.val_scrps, r.learning_rate] for r in self.evaluations],
            "best_step": self.best_step,
            "best_score": self.best_score,
            "stopped_early": self.stopped_early,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TrainingHistory:
        return cls(
            steps=[StepRecord(int(s), float(a), float(b), float(c)) for s, a, b, c in data.get("steps", [])],
            evaluations=[EvalRecord(int(s), float(a), float(b)) for s, a, b in data.get("evaluations", [])],
            best_step=int(data.get("best_step", 0)),
            best_score=float(data.get("best_score", math.inf)),
            stopped_early=bool(data.get("stopped_early", False)),
        )


##
# Batches.
##


def make_batch(
    dataset: PanelDataset, series: Sequence[int], origins: Sequence[int], config: TrainConfig
) -> TrainingBatch:
    """Gather input windows and targets of ``series`` at every origin.

    Series may repeat; each occurrence is a separate member of the joint term.
    """
    rows = list(series)
    inputs = np.stack([dataset.window(origin, config.input_size)[rows] for origin in origins])
    targets = np.stack([dataset.future(origin, config.horizon)[rows] for origin in origins])
    return TrainingBatch(
        series=tuple(rows),
        origins=tuple(int(o) for o in origins),
        inputs=torch.as_tensor(inputs, dtype=torch.float64),
        targets=torch.as_tensor(targets, dtype=torch.float64),
        ids=tuple(dataset.ids[i] for i in rows),
    )


def _batch_stats(batch: TrainingBatch, config: TrainConfig) -> ScalerStats:
    return fit_scaler(batch.inputs.unsqueeze(-1), config.scaler)


def batch_loss(params: ParameterSet, batch: TrainingBatch, config: TrainConfig) -> torch.Tensor:
    """Differentiable NLL of one batch in data units.

    Composite and joint likelihoods score the batch as one joint block per window; the
    univariate likelihood scores every series of the batch on its own.
    """
    stats = _batch_stats(batch, config)
    revin = revin_affine(params)
    x_norm = normalize(batch.inputs.unsqueeze(-1), stats, revin).squeeze(-1)
    theta = denormalize_mixture(forward(params, x_norm, config), stats, revin)
    if config.optimizer.likelihood == "univariate":
        return univariate_nll(theta, batch.targets)
    return joint_nll(theta, batch.targets)


def log_scale_total(batch: TrainingBatch, config: TrainConfig) -> float:
    """``H * sum(log b)`` over the batch: the gap between data-unit and normalized NLL."""
    stats = _batch_stats(batch, config)
    return config.horizon * float(torch.log(stats.scale[..., 0]).sum())


def loss_and_grad(
    params: ParameterSet, batch: TrainingBatch, config: TrainConfig, step: int | None = None
) -> tuple[float, torch.Tensor]:
    """Batch NLL and its gradient with respect to the flat parameter vector.

    Raises:
        NonFiniteError: When the loss or any gradient entry is not finite.
    """
    flat = params.flat.detach().clone().requires_grad_(True)
    loss = batch_loss(params.with_flat(flat), batch, config)
    if not torch.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {float(loss)}", step=step, series=list(batch.ids))
    (grad,) = torch.autograd.grad(loss, flat)
    if not torch.all(torch.isfinite(grad)):
        raise NonFiniteError("non-finite gradient", step=step, series=list(batch.ids))
    return float(loss.detach()), grad.detach()


##
# Optimizer.
##


def adam_step(
    flat: torch.Tensor,
    grad: torch.Tensor,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[torch.Tensor, AdamState]:
    """One bias-corrected ADAM update; returns new parameters and state without mutating inputs."""
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    flat = flat - lr * m_hat / (torch.sqrt(v_hat) + eps)
    return flat, AdamState(step=step, m=m, v=v)


def lr_milestones(config: TrainConfig) -> list[int]:
    """Steps at which the learning rate is decayed, evenly spaced over ``max_steps``."""
    opt = config.optimizer
    return [round(opt.max_steps * k / (opt.num_lr_decays + 1)) for k in range(1, opt.num_lr_decays + 1)]


def learning_rate(config: TrainConfig, step: int) -> float:
    """Learning rate used by the update at (zero-based) ``step``."""
    passed = sum(1 for milestone in lr_milestones(config) if step >= milestone)
    return config.optimizer.learning_rate * config.optimizer.lr_decay_factor**passed


##
# Training loop.
##


class _BatchSampler:
    """Random partitions of the series, one partition per epoch, one block per step."""

    def __init__(self, n_series: int, config: TrainConfig, first: int, last: int, rng: np.random.Generator):
        self._n_series = n_series
        self._config = config
        self._first = first
        self._last = last
        self._rng = rng
        self._queue: list[list[int]] = []

    def next_series(self) -> list[int]:
        if self._config.optimizer.likelihood == "joint":
            return list(range(self._n_series))
        if not self._queue:
            order = self._rng.permutation(self._n_series).tolist()
            size = self._config.optimizer.batch_size
            self._queue = [order[i : i + size] for i in range(0, self._n_series, size)]
        return self._queue.pop(0)

    def next_origins(self) -> list[int]:
        count = self._config.optimizer.windows_per_batch
        return self._rng.integers(self._first, self._last + 1, size=count).tolist()


def validation_score(
    params: ParameterSet, dataset: PanelDataset, spec: HierarchySpec, config: TrainConfig, origin: int
) -> float:
    """sCRPS of the reconciled forecast for the window starting at ``origin``."""
    projection = fit_projection(params, dataset, spec, config, origin)
    forecast = predict_distribution(
        params,
        dataset,
        spec,
        config,
        n_samples=config.early_stopping.val_samples,
        seed=config.seed + VALIDATION_SEED_OFFSET,
        projection=projection,
        origin=origin,
    )
    return scrps(forecast, dataset.future(origin, config.horizon))


def train(
    dataset: PanelDataset,
    spec: HierarchySpec,
    config: TrainConfig,
    *,
    train_stop: int | None = None,
    validation_origin: int | None = None,
    early_stopping: bool = True,
    max_steps: int | None = None,
    progress: bool = False,
) -> tuple[ParameterSet, TrainingHistory]:
    """Fit the network and return the best parameters with the training history.

    Args:
        dataset: Full panel; only observations before ``train_stop`` are used as targets.
        spec: Hierarchy of the panel.
        config: Training configuration.
        train_stop: End of the train range. Defaults to the split's train range.
        validation_origin: Origin of the validation window. Defaults to the split's validation range.
        early_stopping: Evaluate and stop on validation sCRPS. When disabled the final
            parameters are returned after ``max_steps``.
        max_steps: Override of ``config.optimizer.max_steps``.
        progress: Show a progress bar.

    Raises:
        DataError: When no window fits in the train range.
        NonFiniteError: When a loss or gradient is not finite.
    """
    config.validate()
    split = make_split(dataset.length, config.horizon)
    train_stop = split.train[1] if train_stop is None else train_stop
    validation_origin = split.validation[0] if validation_origin is None else validation_origin
    max_steps = config.optimizer.max_steps if max_steps is None else max_steps
    first, last = config.input_size, train_stop - config.horizon
    if last < first:
        raise DataError(
            f"empty training range: windows of {config.input_size} + {config.horizon} do not fit before {train_stop}"
        )

    rng = np.random.default_rng(config.seed)
    params = init_parameters(config)
    state = AdamState.zeros(params.numel)
    sampler = _BatchSampler(dataset.n_series, config, first, last, rng)
    history = TrainingHistory()
    best_flat = params.flat.clone()
    bad_evals = 0
    interval = config.early_stopping.eval_interval

    logger.info(
        "training %d parameters on %d series, origins [%d, %d], %d steps",
        params.numel,
        dataset.n_series,
        first,
        last,
        max_steps,
    )
    for step in tqdm(range(max_steps), desc="train", disable=not progress):
        batch = make_batch(dataset, sampler.next_series(), sampler.next_origins(), config)
        lr = learning_rate(config, step)
        loss, grad = loss_and_grad(params, batch, config, step=step)
        history.steps.append(StepRecord(step, loss, loss - log_scale_total(batch, config), lr))
        flat, state = adam_step(params.flat, grad, state, lr)
        params = params.with_flat(flat)

        done = step + 1
        if not early_stopping or (done % interval != 0 and done != max_steps):
            continue
        score = validation_score(params, dataset, spec, config, validation_origin)
        history.evaluations.append(EvalRecord(done, score, lr))
        logger.info("step %d: loss %.6f, validation sCRPS %.6f, lr %.3g", done, loss, score, lr)
        if score < history.best_score:
            history.best_score, history.best_step = score, done
            best_flat = params.flat.clone()
            bad_evals = 0
        else:
            bad_evals += 1
            if bad_evals >= config.early_stopping.patience:
                history.stopped_early = True
                logger.info("early stopping at step %d, best step %d", done, history.best_step)
                break

    if not early_stopping:
        history.best_step = len(history.steps)
        return params, history
    return params.with_flat(best_flat), history


def recalibrate(
    dataset: PanelDataset, spec: HierarchySpec, config: TrainConfig, steps: int, progress: bool = False
) -> tuple[ParameterSet, TrainingHistory]:
    """Retrain on train plus validation for ``steps`` steps with the same seed, no early stopping."""
    split = make_split(dataset.length, config.horizon)
    logger.info("recalibrating on [0, %d) for %d steps", split.validation[1], steps)
    return train(
        dataset,
        spec,
        config,
        train_stop=split.validation[1],
        early_stopping=False,
        max_steps=max(1, steps),
        progress=progress,
    )
