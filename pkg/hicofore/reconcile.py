# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Reconciliation projections and their application to points and sample clouds.

A reconciler is a matrix ``P`` of shape ``(N_b, N_i)`` that collapses base forecasts to the
bottom level; ``S P`` then re-aggregates them onto the coherent subspace.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import ReconciliationError, ShapeError, SingularMatrixError
from .hierarchy import HierarchySpec, SummingMatrix, summing_matrix

logger = logging.getLogger(__name__)

RCOND_THRESHOLD = 1e-12
"""Normal matrices with a smaller reciprocal condition estimate are treated as singular."""


class ReconcilerKind(str, enum.Enum):
    """Reconciliation strategies, valued by their CLI names."""

    BOTTOM_UP = "bottom_up"
    TOP_DOWN = "top_down"
    MINTRACE_OLS = "mintrace_ols"
    MINTRACE_WLS = "mintrace_wls"


@dataclass(frozen=True)
class ProjectionMatrix:
    """Reconciliation matrix ``P`` with its strategy tag."""

    data: np.ndarray
    strategy: ReconcilerKind

    def __post_init__(self):
        self.data.setflags(write=False)


@dataclass(frozen=True)
class ReconciledSamples:
    """Coherent samples of shape ``(n_samples, N_i, horizon)``."""

    data: np.ndarray
    strategy: ReconcilerKind
    seed: int | None = None


##
# Projections.
##


def bottom_up_projection(spec: HierarchySpec) -> ProjectionMatrix:
    """``P = [0 | I]``: keep the bottom base forecasts."""
    data = np.zeros((spec.n_bottom, spec.n_series), dtype=np.float64)
    data[:, spec.n_aggregate :] = np.eye(spec.n_bottom)
    return ProjectionMatrix(data=data, strategy=ReconcilerKind.BOTTOM_UP)


def _check_total_first(spec: HierarchySpec) -> None:
    if spec.n_aggregate == 0 or len(spec.aggregates[0][1]) != spec.n_bottom:
        raise ReconciliationError("top-down reconciliation needs the total as the first series")


def top_down_projection(spec: HierarchySpec, proportions: np.ndarray) -> ProjectionMatrix:
    """``P = [p | 0]``: distribute the total with proportions ``p``.

    Args:
        spec: The hierarchy; its first series must be the total over all bottoms.
        proportions: Non-negative shares of length ``N_b`` summing to one.
    """
    _check_total_first(spec)
    proportions = np.asarray(proportions, dtype=np.float64)
    if proportions.shape != (spec.n_bottom,):
        raise ShapeError(f"expected {spec.n_bottom} proportions, got shape {proportions.shape}")
    if np.any(proportions < 0.0):
        raise ReconciliationError("negative proportion")
    if abs(proportions.sum() - 1.0) > 1e-10:
        raise ReconciliationError(f"proportions must sum to 1 (got {proportions.sum():.12g})")
    data = np.zeros((spec.n_bottom, spec.n_series), dtype=np.float64)
    data[:, 0] = proportions
    return ProjectionMatrix(data=data, strategy=ReconcilerKind.TOP_DOWN)


def historical_proportions(spec: HierarchySpec, y_history: np.ndarray) -> np.ndarray:
    """Average historical shares of each bottom series in the total.

    Args:
        spec: The hierarchy.
        y_history: Bottom history of shape ``(N_b, T)``.

    Returns:
        ``p_b = mean_t y_{b,t} / sum_b y_{b,t}``.
    """
    y_history = np.asarray(y_history, dtype=np.float64)
    if y_history.ndim != 2 or y_history.shape[0] != spec.n_bottom or y_history.shape[1] < 1:
        raise ShapeError(f"expected bottom history of shape ({spec.n_bottom}, T>=1), got {y_history.shape}")
    totals = y_history.sum(axis=0)
    zero = np.flatnonzero(totals == 0.0)
    if zero.size:
        raise ReconciliationError(f"zero total at time step {int(zero[0])}")
    return (y_history / totals).mean(axis=1)


def min_trace_projection(
    spec: HierarchySpec, method: str = "ols", residual_variances: np.ndarray | None = None
) -> ProjectionMatrix:
    """Trace-minimizing projection ``P = (S' W^-1 S)^-1 S' W^-1``.

    Args:
        spec: The hierarchy.
        method: ``"ols"`` for ``W = I`` or ``"wls"`` for ``W = diag(residual_variances)``.
        residual_variances: Strictly positive per-series variances, required for ``"wls"``.

    Raises:
        ReconciliationError: On non-positive variances.
        SingularMatrixError: When the normal matrix is numerically singular.
    """
    S = spec._summing
    if method == "ols":
        w_inv = np.ones(spec.n_series)
        strategy = ReconcilerKind.MINTRACE_OLS
    elif method == "wls":
        if residual_variances is None:
            raise ReconciliationError("WLS reconciliation needs residual variances")
        residual_variances = np.asarray(residual_variances, dtype=np.float64)
        if residual_variances.shape != (spec.n_series,):
            raise ShapeError(f"expected {spec.n_series} variances, got shape {residual_variances.shape}")
        if not np.all(np.isfinite(residual_variances)) or np.any(residual_variances <= 0.0):
            raise ReconciliationError("residual variances must be strictly positive")
        w_inv = 1.0 / residual_variances
        strategy = ReconcilerKind.MINTRACE_WLS
    else:
        raise ReconciliationError(f"unknown MinTrace method '{method}'")

    rhs = S.T * w_inv  # S' W^-1
    normal = rhs @ S
    lu, piv = lu_factor(normal, check_finite=False)
    rcond, info = lapack.dgecon(lu, np.linalg.norm(normal, 1), norm="1")
    if info != 0 or rcond < RCOND_THRESHOLD:
        raise SingularMatrixError(f"singular normal matrix S'W^-1S (rcond={rcond:.3g})")
    data = lu_solve((lu, piv), rhs, check_finite=False)
    return ProjectionMatrix(data=data, strategy=strategy)


def residual_variances(residuals: np.ndarray) -> np.ndarray:
    """Per-series population variance of in-sample residuals, shape ``(N_i, n)`` -> ``(N_i,)``.

    Variances are floored at ``1e-12`` times the mean variance so a perfectly fitted series
    still gives an invertible weight.
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.ndim != 2 or residuals.shape[1] < 1:
        raise ShapeError(f"expected residuals of shape (N_i, n>=1), got {residuals.shape}")
    variances = residuals.var(axis=1)
    floor = 1e-12 * max(float(variances.mean()), 1.0)
    return np.maximum(variances, floor)


def build_projection(
    spec: HierarchySpec,
    strategy: ReconcilerKind | str,
    *,
    proportions: np.ndarray | None = None,
    residual_variances: np.ndarray | None = None,
    y_history: np.ndarray | None = None,
) -> ProjectionMatrix:
    """Construct the projection for a strategy name.

    TopDown falls back to :func:`historical_proportions` of ``y_history`` (bottom rows) when no
    proportions are given.
    """
    strategy = ReconcilerKind(strategy)
    if strategy is ReconcilerKind.BOTTOM_UP:
        return bottom_up_projection(spec)
    if strategy is ReconcilerKind.TOP_DOWN:
        if proportions is None:
            if y_history is None:
                raise ReconciliationError("top-down reconciliation needs proportions or a history")
            proportions = historical_proportions(spec, y_history)
        return top_down_projection(spec, proportions)
    if strategy is ReconcilerKind.MINTRACE_OLS:
        return min_trace_projection(spec, "ols")
    return min_trace_projection(spec, "wls", residual_variances)


##
# Application.
##


def _check_conformance(S: SummingMatrix, P: ProjectionMatrix) -> None:
    if P.data.shape != (S.shape[1], S.shape[0]):
        raise ShapeError(f"projection shape {P.data.shape} does not match summing matrix {S.shape}")


def reconcile_points(S: SummingMatrix, P: ProjectionMatrix, y_hat: np.ndarray) -> np.ndarray:
    """Reconciled point forecasts ``S P y_hat`` for a vector or an ``(N_i, h)`` matrix."""
    _check_conformance(S, P)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_hat.ndim not in (1, 2) or y_hat.shape[0] != S.shape[0]:
        raise ShapeError(f"expected base forecasts with {S.shape[0]} rows, got shape {y_hat.shape}")
    return S.data @ (P.data @ y_hat)


def reconcile_samples(
    S: SummingMatrix, P: ProjectionMatrix, base_samples: np.ndarray, seed: int | None = None
) -> ReconciledSamples:
    """Bootstrap reconciliation: map every base sample through ``S P``.

    Args:
        S: Summing matrix.
        P: Projection.
        base_samples: Samples of shape ``(n, N_i, h)``.
        seed: Seed the base samples were drawn with, recorded on the result.
    """
    _check_conformance(S, P)
    base_samples = np.asarray(base_samples, dtype=np.float64)
    if base_samples.ndim != 3 or base_samples.shape[1] != S.shape[0]:
        raise ShapeError(f"expected samples of shape (n, {S.shape[0]}, h), got {base_samples.shape}")
    if not np.all(np.isfinite(base_samples)):
        raise ReconciliationError("non-finite base samples")
    bottom = np.einsum("bi,nih->nbh", P.data, base_samples)
    data = np.einsum("ib,nbh->nih", S.data, bottom)
    return ReconciledSamples(data=data, strategy=P.strategy, seed=seed)


def reconciled_covariance(S: SummingMatrix, P: ProjectionMatrix, base_covariance: np.ndarray) -> np.ndarray:
    """Covariance of ``S P y`` when ``y`` has covariance ``base_covariance``."""
    _check_conformance(S, P)
    SP = S.data @ P.data
    return SP @ np.asarray(base_covariance, dtype=np.float64) @ SP.T


def half_space_probabilities(samples: np.ndarray, normal: np.ndarray, offset: float) -> tuple[float, float]:
    """Monte-Carlo probability of ``{y : normal . y <= offset}`` and its standard error.

    Args:
        samples: Sample matrix of shape ``(n, d)``.
        normal: Half-space normal of length ``d``.
        offset: Half-space offset.
    """
    inside = np.asarray(samples, dtype=np.float64) @ np.asarray(normal, dtype=np.float64) <= offset
    prob = float(inside.mean())
    return prob, float(np.sqrt(max(prob * (1.0 - prob), 1e-300) / inside.size))


def projection_for(spec: HierarchySpec, P: ProjectionMatrix) -> np.ndarray:
    """The full reconciliation map ``S P`` of shape ``(N_i, N_i)``."""
    return summing_matrix(spec).data @ P.data
