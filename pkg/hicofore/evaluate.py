# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Probabilistic and point accuracy metrics with per-level reports.

sCRPS integrates the quantile loss over a grid of levels and scales it by the absolute actuals:

.. math::

    sCRPS = \\frac{2}{N_i} \\frac{\\sum_{i,\\tau} \\overline{QL}_{i,\\tau}}{\\sum_{i,\\tau} |y_{i,\\tau}|}

where :math:`\\overline{QL}` is the mean pinball loss over the grid. Both sums run over every
series and horizon step of the evaluation window.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .errors import MetricError, ShapeError
from .hierarchy import HierarchySpec, level_groups
from .mixture import quantiles_from_samples

if TYPE_CHECKING:
    from .forecaster.predict import ForecastSet

logger = logging.getLogger(__name__)

DEFAULT_Q_GRID = np.linspace(0.01, 0.99, 99)
"""99 equispaced quantile levels."""


def max_workers() -> int:
    """Evaluation parallelism, capped by ``HICOFORE_THREADS``."""
    cap = os.environ.get("HICOFORE_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            logger.warning("ignoring non-integer HICOFORE_THREADS=%r", cap)
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class EvaluationReport:
    """Overall and per-level metrics of one forecast."""

    scrps: float
    relmse: float
    per_level: dict[int, dict[str, float]]
    metadata: dict[str, Any] = field(default_factory=dict)


def quantile_loss(y, y_q, q):
    """Pinball loss ``q * max(y - y_q, 0) + (1 - q) * max(y_q - y, 0)``."""
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise MetricError("quantile level must lie in (0, 1)")
    diff = np.asarray(y, dtype=np.float64) - np.asarray(y_q, dtype=np.float64)
    loss = q * np.maximum(diff, 0.0) + (1.0 - q) * np.maximum(-diff, 0.0)
    return float(loss) if loss.ndim == 0 else loss


def _grid_quantiles(forecast: ForecastSet, q_grid: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    if q_grid is None:
        return forecast.quantiles, forecast.q_grid
    q_grid = np.asarray(q_grid, dtype=np.float64)
    if q_grid.shape == forecast.q_grid.shape and np.array_equal(q_grid, forecast.q_grid):
        return forecast.quantiles, q_grid
    return quantiles_from_samples(forecast.samples, q_grid), q_grid


def scrps(
    forecast: ForecastSet, y_true, q_grid: np.ndarray | None = None, denominator_guard: float | None = None
) -> float:
    """Scaled CRPS of a forecast against actuals of shape ``(N_i, h)``.

    Args:
        forecast: Forecast whose samples provide the quantiles.
        y_true: Actual values.
        q_grid: Quantile levels; defaults to the forecast's grid.
        denominator_guard: Value used in place of a zero ``sum |y|``. Without it a zero
            denominator raises.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    quantiles, q_grid = _grid_quantiles(forecast, q_grid)
    if y_true.shape != quantiles.shape[1:]:
        raise ShapeError(f"actuals of shape {y_true.shape} do not match forecast {quantiles.shape[1:]}")
    if not np.all(np.isfinite(y_true)):
        raise MetricError("non-finite actuals")
    mean_loss = quantile_loss(y_true, quantiles, q_grid[:, None, None]).mean(axis=0)
    denominator = float(np.abs(y_true).sum())
    if denominator == 0.0:
        if denominator_guard is None:
            raise MetricError("sCRPS is undefined when all actuals are zero")
        denominator = denominator_guard
    return 2.0 / y_true.shape[0] * float(mean_loss.sum()) / denominator


def mse(y_true, y_hat) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_true.shape != y_hat.shape:
        raise ShapeError(f"shapes {y_true.shape} and {y_hat.shape} differ")
    return float(np.mean((y_true - y_hat) ** 2))


def relmse(y_true, y_hat, y_naive) -> float:
    """``MSE(y, y_hat) / MSE(y, y_naive)`` over all series and horizons."""
    baseline = mse(y_true, y_naive)
    if baseline == 0.0:
        raise MetricError("relMSE is undefined when the naive forecast is perfect")
    return mse(y_true, y_hat) / baseline


def naive_forecast(y_history, horizon: int) -> np.ndarray:
    """Last observed value repeated over the horizon, shape ``(N_i, horizon)``."""
    y_history = np.asarray(y_history, dtype=np.float64)
    if y_history.ndim != 2 or y_history.shape[1] < 1:
        raise ShapeError(f"expected history of shape (N_i, T>=1), got {y_history.shape}")
    return np.repeat(y_history[:, -1:], horizon, axis=1)


def _defined_or_nan(level: int, name: str, metric, *args) -> float:
    try:
        return metric(*args)
    except MetricError as err:
        logger.warning("level %d: %s undefined (%s)", level, name, err)
        return float("nan")


def evaluate(
    forecast: ForecastSet,
    y_true,
    spec: HierarchySpec,
    y_naive,
    y_hat=None,
    q_grid: np.ndarray | None = None,
    denominator_guard: float | None = None,
) -> EvaluationReport:
    """Overall and per-level sCRPS and relMSE.

    Args:
        forecast: Reconciled forecast.
        y_true: Actuals of shape ``(N_i, h)``.
        spec: Hierarchy defining the levels.
        y_naive: Naive benchmark forecast for relMSE.
        y_hat: Point forecast; defaults to the sample mean of the forecast.
        q_grid: Quantile levels; defaults to the forecast's grid.
        denominator_guard: Passed to :func:`scrps` for every level and the overall score.

    A level whose metric is undefined (all-zero actuals without a guard, or a perfect naive
    forecast) reports NaN for that metric; the overall metrics still raise.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_naive = np.asarray(y_naive, dtype=np.float64)
    y_hat = forecast.mean() if y_hat is None else np.asarray(y_hat, dtype=np.float64)
    groups = level_groups(spec)

    def _level_metrics(group: tuple[int, list[int]]) -> tuple[int, dict[str, float]]:
        level, rows = group
        return level, {
            "scrps": _defined_or_nan(
                level, "sCRPS", scrps, forecast.select(rows), y_true[rows], q_grid, denominator_guard
            ),
            "relmse": _defined_or_nan(level, "relMSE", relmse, y_true[rows], y_hat[rows], y_naive[rows]),
        }

    # map() keeps the level order, so the reduction is deterministic
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        per_level = dict(pool.map(_level_metrics, groups))

    report = EvaluationReport(
        scrps=scrps(forecast, y_true, q_grid, denominator_guard),
        relmse=relmse(y_true, y_hat, y_naive),
        per_level=per_level,
        metadata={
            "q_grid_size": int(len(forecast.q_grid if q_grid is None else q_grid)),
            "n_samples": int(forecast.samples.shape[0]),
            "seed": forecast.seed,
            "strategy": forecast.strategy.value,
        },
    )
    logger.debug("evaluation: sCRPS=%.6f relMSE=%.6f", report.scrps, report.relmse)
    return report


def report_to_dict(report: EvaluationReport) -> dict[str, Any]:
    return {
        "overall": {"scrps": report.scrps, "relmse": report.relmse},
        "per_level": {str(level): metrics for level, metrics in report.per_level.items()},
        "metadata": report.metadata,
    }


def format_report(report: EvaluationReport) -> str:
    """Aligned-column text table with one row per level and an overall row."""
    rows = [("level", "sCRPS", "relMSE")]
    for level, metrics in report.per_level.items():
        rows.append((str(level), f"{metrics['scrps']:.6f}", f"{metrics['relmse']:.6f}"))
    rows.append(("overall", f"{report.scrps:.6f}", f"{report.relmse:.6f}"))
    widths = [max(len(row[col]) for row in rows) for col in range(3)]
    lines = ["  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in rows]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)
