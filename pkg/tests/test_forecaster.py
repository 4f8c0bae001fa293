# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Tests for the forecaster: forward pass, gradients, ADAM, training loop, prediction and checkpoints."""

import math
import os

import numpy as np
import pytest
import torch
from scipy.special import logsumexp
from scipy.stats import norm

from hicofore.errors import ConfigError, DataError, NonFiniteError, ShapeError
from hicofore.forecaster import (
    AdamState,
    Checkpoint,
    MixtureNetworkCfg,
    OptimizerCfg,
    TrainConfig,
    adam_step,
    forward,
    init_parameters,
    load_cfg_from_registry,
    load_checkpoint,
    loss_and_grad,
    predict_distribution,
    save_checkpoint,
    train,
)
from hicofore.forecaster.network import build_layout
from hicofore.forecaster.predict import base_point_forecast, fit_projection, in_sample_residuals
from hicofore.forecaster.trainer import batch_loss, learning_rate, lr_milestones, make_batch
from hicofore.hierarchy import coherence_residual
from hicofore.pipeline import PanelDataset, synth_hierarchy
from hicofore.reconcile import ReconcilerKind, bottom_up_projection, build_projection
from hicofore.scaling import ScalerKind, denormalize_mixture, fit_scaler, normalize


def _tiny_cfg(scaler=ScalerKind.STANDARD, n_components=2, likelihood="composite") -> TrainConfig:
    return TrainConfig(
        horizon=3,
        scaler=scaler,
        network=MixtureNetworkCfg(input_multiplier=2, hidden_size=8, num_layers=2, num_components=n_components),
        optimizer=OptimizerCfg(likelihood=likelihood),
    ).validate()


def _two_series(seed=0) -> PanelDataset:
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.normal(size=(2, 24)), axis=1) + np.array([[20.0], [5.0]])
    return PanelDataset(ids=("a", "b"), values=values)


def _perturbed(cfg: TrainConfig, seed: int):
    params = init_parameters(cfg, seed)
    generator = torch.Generator().manual_seed(seed)
    noise = 0.1 * torch.randn(params.numel, generator=generator, dtype=torch.float64)
    return params.with_flat(params.flat + noise)


##
# Forward pass.
##


def test_layout_covers_flat_vector():
    cfg = _tiny_cfg(ScalerKind.REVIN)
    layout = build_layout(cfg)
    params = init_parameters(cfg)

    offsets = [slot.offset for slot in layout]
    assert offsets == sorted(offsets)
    assert sum(slot.numel for slot in layout) == params.numel
    assert [slot.name for slot in layout][-2:] == ["revin.weight", "revin.bias"]
    assert float(params.view("revin.weight")) == 1.0
    assert build_layout(cfg) == layout


def test_forward_at_zero_parameters():
    cfg = _tiny_cfg(n_components=4)
    params = init_parameters(cfg).with_flat(torch.zeros(init_parameters(cfg).numel, dtype=torch.float64))
    omega = forward(params, torch.randn(5, 6, dtype=torch.float64), cfg)

    np.testing.assert_allclose(omega.weights.numpy(), 0.25)
    np.testing.assert_array_equal(omega.locations.numpy(), 0.0)
    np.testing.assert_allclose(omega.scales.numpy(), math.log(2.0) + 1e-6, rtol=1e-12)
    assert omega.locations.shape == (5, 4, 3)


def test_forward_deterministic_and_single_component():
    cfg = _tiny_cfg(n_components=1)
    params = _perturbed(cfg, 1)
    window = torch.randn(2, 6, dtype=torch.float64)

    first, second = forward(params, window, cfg), forward(params, window, cfg)
    assert torch.equal(first.locations, second.locations)
    assert torch.equal(first.scales, second.scales)
    np.testing.assert_array_equal(first.weights.numpy(), [1.0])
    assert torch.all(first.scales > 0)


def test_forward_shape_errors():
    cfg = _tiny_cfg()
    with pytest.raises(ShapeError):
        forward(init_parameters(cfg), torch.zeros(7, dtype=torch.float64), cfg)
    with pytest.raises(ShapeError):
        forward(init_parameters(_tiny_cfg(n_components=3)), torch.zeros(6, dtype=torch.float64), cfg)


##
# Loss and gradient.
##


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("scaler", list(ScalerKind))
@pytest.mark.parametrize("n_components", [1, 3])
def test_gradient_matches_finite_differences(seed, scaler, n_components):
    cfg = _tiny_cfg(scaler, n_components)
    params = _perturbed(cfg, seed)
    batch = make_batch(_two_series(seed), [0, 1], [6, 11, 17], cfg)

    _, grad = loss_and_grad(params, batch, cfg)
    assert grad.shape == (params.numel,)

    eps = 1e-5
    with torch.no_grad():
        center = float(batch_loss(params, batch, cfg))
        numeric = torch.empty_like(grad)
        kink = torch.zeros(params.numel, dtype=torch.bool)
        for j in range(params.numel):
            step = torch.zeros_like(params.flat)
            step[j] = eps
            upper = float(batch_loss(params.with_flat(params.flat + step), batch, cfg))
            lower = float(batch_loss(params.with_flat(params.flat - step), batch, cfg))
            numeric[j] = (upper - lower) / (2.0 * eps)
            # one-sided slopes disagree only when the step crosses a ReLU kink
            forward_slope, backward_slope = (upper - center) / eps, (center - lower) / eps
            kink[j] = abs(forward_slope - backward_slope) > 1e-3 * max(abs(float(grad[j])), 1e-3)

    assert int(kink.sum()) <= 0.05 * params.numel
    scale = torch.clamp(torch.maximum(grad.abs(), numeric.abs()), min=1e-3)
    relative_error = ((grad - numeric).abs() / scale)[~kink]
    assert float(relative_error.max()) < 1e-4


def test_single_gaussian_loss_closed_form():
    cfg = _tiny_cfg(ScalerKind.IDENTITY, n_components=1)
    params = _perturbed(cfg, 2)
    # sigma pre-activations pinned so that softplus(.) + 1e-6 == 1
    head_w, head_b = params.view("head.weight"), params.view("head.bias")
    head_w[cfg.horizon :] = 0.0
    head_b[cfg.horizon :] = math.log(math.expm1(1.0 - 1e-6))
    dataset = _two_series(2)
    batch = make_batch(dataset, [0], [10], cfg)

    mu = forward(params, batch.inputs, cfg).locations[0, 0, 0].detach().numpy()
    residual = batch.targets[0, 0].numpy() - mu
    loss, _ = loss_and_grad(params, batch, cfg)
    assert loss == pytest.approx(0.5 * (residual**2).sum() + 1.5 * math.log(2.0 * math.pi), rel=1e-9)


def test_duplicated_series_joins_the_joint_term():
    cfg = _tiny_cfg(ScalerKind.ROBUST, n_components=2)
    params = _perturbed(cfg, 3)
    dataset = _two_series(3)
    single = make_batch(dataset, [0], [8, 12], cfg)
    duplicate = make_batch(dataset, [0, 0], [8, 12], cfg)

    # brute force: every component density of the lone series enters squared
    stats = fit_scaler(single.inputs.unsqueeze(-1), cfg.scaler)
    theta = denormalize_mixture(
        forward(params, normalize(single.inputs.unsqueeze(-1), stats).squeeze(-1), cfg), stats
    )
    w = theta.weights.detach().numpy()
    loc, scale = theta.locations.detach().numpy(), theta.scales.detach().numpy()
    y = single.targets.numpy()
    expected = 0.0
    for window in range(2):
        per_component = [
            math.log(w[k]) + 2.0 * norm.logpdf(y[window, 0], loc[window, 0, k], scale[window, 0, k]).sum()
            for k in range(2)
        ]
        expected -= logsumexp(per_component)

    loss, _ = loss_and_grad(params, duplicate, cfg)
    assert loss == pytest.approx(expected, rel=1e-10)


def test_likelihood_variants_agree_for_single_component():
    # with one component the joint density factorizes, so all likelihoods coincide
    dataset = _two_series(4)
    losses = []
    for likelihood in ("composite", "univariate", "joint"):
        cfg = _tiny_cfg(n_components=1, likelihood=likelihood)
        losses.append(loss_and_grad(_perturbed(cfg, 4), make_batch(dataset, [0, 1], [9], cfg), cfg)[0])
    assert losses[0] == pytest.approx(losses[1], rel=1e-12)
    assert losses[0] == pytest.approx(losses[2], rel=1e-12)


def test_non_finite_loss_is_reported():
    cfg = _tiny_cfg()
    params = init_parameters(cfg)
    params = params.with_flat(torch.full_like(params.flat, float("nan")))
    batch = make_batch(_two_series(), [1], [9], cfg)

    with pytest.raises(NonFiniteError, match="step=7"):
        loss_and_grad(params, batch, cfg, step=7)


##
# Optimizer.
##


def test_adam_first_step():
    flat, state = adam_step(torch.zeros(1, dtype=torch.float64), torch.tensor([2.0]).double(), AdamState.zeros(1), 0.1)

    assert float(flat) == pytest.approx(-0.1, abs=1e-8)
    assert state.step == 1


def test_adam_zero_gradient_and_symmetry():
    flat = torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64)
    state = AdamState.zeros(3)
    for _ in range(5):
        flat_next, state = adam_step(flat, torch.zeros(3, dtype=torch.float64), state, 0.1)
    assert torch.equal(flat_next, flat)

    start = torch.tensor([1.0, 1.0, 3.0], dtype=torch.float64)
    moved, _ = adam_step(start, torch.tensor([0.5, 0.5, -1.0]).double(), AdamState.zeros(3), 0.01)
    assert float(moved[0]) == float(moved[1])
    assert float(moved[0] - start[0]) == pytest.approx(-0.01, rel=1e-6)


def test_learning_rate_schedule():
    cfg = load_cfg_from_registry("default")
    assert lr_milestones(cfg) == [250, 500, 750]
    assert learning_rate(cfg, 0) == pytest.approx(1e-3)
    assert learning_rate(cfg, 249) == pytest.approx(1e-3)
    assert learning_rate(cfg, 250) == pytest.approx(3e-4)
    assert learning_rate(cfg, 999) == pytest.approx(1e-3 * 0.3**3)


##
# Training loop.
##


def test_train_is_deterministic(small_panel, smoke_cfg):
    spec, dataset = small_panel
    smoke_cfg.optimizer.max_steps = 20
    smoke_cfg.early_stopping.eval_interval = 10

    params_a, history_a = train(dataset, spec, smoke_cfg)
    params_b, history_b = train(dataset, spec, smoke_cfg)
    assert torch.equal(params_a.flat, params_b.flat)
    assert history_a.to_dict() == history_b.to_dict()
    assert len(history_a.evaluations) == 2


def test_frozen_training_stops_after_two_evaluations(small_panel, smoke_cfg):
    spec, dataset = small_panel
    smoke_cfg.optimizer.learning_rate = 0.0
    smoke_cfg.optimizer.max_steps = 100
    smoke_cfg.early_stopping.eval_interval = 5
    smoke_cfg.early_stopping.patience = 1

    _, history = train(dataset, spec, smoke_cfg)
    assert len(history.evaluations) == 2
    assert history.stopped_early
    assert history.best_step == 5


def test_training_reduces_loss(small_panel, smoke_cfg):
    spec, dataset = small_panel
    batch = make_batch(dataset, list(range(dataset.n_series)), [10, 20, 30, 40], smoke_cfg)
    initial, _ = loss_and_grad(init_parameters(smoke_cfg), batch, smoke_cfg)

    params, history = train(dataset, spec, smoke_cfg, early_stopping=False, max_steps=200)
    trained, _ = loss_and_grad(params, batch, smoke_cfg)
    assert trained < initial
    assert len(history.steps) == 200


def test_constant_series_reach_small_validation_scrps(smoke_cfg):
    spec, dataset = synth_hierarchy(4, 60, seasonal_amplitude=0.0, noise_scale=0.0, horizon=4, seed=0)
    smoke_cfg.optimizer.learning_rate = 1e-2
    smoke_cfg.optimizer.max_steps = 500
    smoke_cfg.early_stopping.eval_interval = 50
    smoke_cfg.early_stopping.patience = 10

    _, history = train(dataset, spec, smoke_cfg)
    assert history.best_score < 0.01


@pytest.mark.parametrize("scaler", [ScalerKind.STANDARD, ScalerKind.ROBUST])
def test_normalized_losses_are_scale_free(small_panel, smoke_cfg, scaler):
    spec, dataset = small_panel
    smoke_cfg.scaler = scaler
    shifted = PanelDataset(ids=dataset.ids, values=3.5 * dataset.values + 40.0)

    _, history = train(dataset, spec, smoke_cfg, early_stopping=False, max_steps=30)
    _, history_shifted = train(shifted, spec, smoke_cfg, early_stopping=False, max_steps=30)
    np.testing.assert_allclose(
        [r.normalized_loss for r in history_shifted.steps],
        [r.normalized_loss for r in history.steps],
        rtol=1e-6,
        atol=1e-6,
    )


def test_empty_training_range(smoke_cfg):
    spec, dataset = synth_hierarchy(2, 12, horizon=4, seed=0)
    with pytest.raises(DataError, match="empty training range"):
        train(dataset, spec, smoke_cfg)


def test_invalid_config_is_rejected(small_panel, smoke_cfg):
    spec, dataset = small_panel
    smoke_cfg.optimizer.learning_rate = -1.0
    with pytest.raises(ConfigError):
        train(dataset, spec, smoke_cfg)


##
# Prediction.
##


@pytest.mark.parametrize("reconciler", list(ReconcilerKind))
def test_predict_distribution_is_coherent(small_panel, smoke_cfg, reconciler):
    spec, dataset = small_panel
    smoke_cfg.reconciler = reconciler
    params = _perturbed(smoke_cfg, 5)
    projection = fit_projection(params, dataset, spec, smoke_cfg, 52)

    forecast = predict_distribution(params, dataset, spec, smoke_cfg, 500, seed=3, projection=projection, origin=52)
    assert forecast.samples.shape == (500, spec.n_series, smoke_cfg.horizon)
    assert forecast.strategy is reconciler
    for draw in forecast.samples[:50]:
        assert coherence_residual(spec, draw) <= 1e-8 * (1.0 + np.max(np.abs(draw)))


def test_predict_distribution_same_seed(small_panel, smoke_cfg):
    spec, dataset = small_panel
    params = _perturbed(smoke_cfg, 6)
    projection = build_projection(spec, "mintrace_ols")

    first = predict_distribution(params, dataset, spec, smoke_cfg, 200, seed=9, projection=projection)
    second = predict_distribution(params, dataset, spec, smoke_cfg, 200, seed=9, projection=projection)
    np.testing.assert_array_equal(first.samples, second.samples)
    np.testing.assert_array_equal(first.quantiles, second.quantiles)
    assert first.origin == dataset.length


def test_bottom_up_aggregates_are_exact_sums(small_panel, smoke_cfg):
    spec, dataset = small_panel
    params = _perturbed(smoke_cfg, 7)
    forecast = predict_distribution(
        params, dataset, spec, smoke_cfg, 100, seed=0, projection=bottom_up_projection(spec), origin=40
    )

    bottoms = forecast.samples[:, spec.n_aggregate :]
    for row, (_, children) in enumerate(spec.aggregates):
        np.testing.assert_array_equal(forecast.samples[:, row], bottoms[:, list(children)].sum(axis=1))


def test_point_forecast_and_residuals(small_panel, smoke_cfg):
    spec, dataset = small_panel
    params = _perturbed(smoke_cfg, 8)

    assert base_point_forecast(params, dataset, smoke_cfg, 40).shape == (spec.n_series, smoke_cfg.horizon)
    residuals = in_sample_residuals(params, dataset, smoke_cfg, 40)
    assert residuals.shape[0] == spec.n_series
    assert np.all(np.isfinite(residuals))


##
# Checkpoints.
##


def test_checkpoint_round_trip(tmp_path, small_panel, smoke_cfg):
    spec, dataset = small_panel
    params = _perturbed(smoke_cfg, 9)
    path = os.path.join(tmp_path, "model.ckpt")
    save_checkpoint(path, Checkpoint(params=params, config=smoke_cfg, spec=spec, data_path="panel.csv"))

    loaded = load_checkpoint(path)
    assert torch.equal(loaded.params.flat, params.flat)
    assert loaded.spec == spec
    assert loaded.config.to_dict() == smoke_cfg.to_dict()
    window = torch.randn(3, smoke_cfg.input_size, dtype=torch.float64)
    assert torch.equal(forward(loaded.params, window, loaded.config).locations, forward(params, window, smoke_cfg).locations)

    again = os.path.join(tmp_path, "again.ckpt")
    save_checkpoint(again, loaded)
    with open(path, "rb") as a, open(again, "rb") as b:
        assert a.read() == b.read()


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = os.path.join(tmp_path, "bad.ckpt")
    with open(path, "w", encoding="utf-8") as file:
        file.write('{"format_version": 99}')
    with pytest.raises(ConfigError, match="format version"):
        load_checkpoint(path)
