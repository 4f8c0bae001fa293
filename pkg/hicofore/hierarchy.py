# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Aggregation structure of a hierarchical time series.

Series are ordered aggregates first, bottoms second, so that the summing matrix is the block
``S = [A ; I]`` with ``A`` the aggregation matrix and ``I`` the bottom identity.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np

from .errors import HierarchyError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HierarchySpec:
    """Aggregation structure: bottom ids, aggregates as bottom-index sets and levels.

    Attributes:
        bottom_ids: Ordered bottom-series identifiers.
        aggregates: Ordered ``(aggregate_id, bottom indices)`` pairs. Indices are sorted and unique.
        levels: Level of every series in full-series order (aggregates then bottoms), 0 is the top.
    """

    bottom_ids: tuple[str, ...]
    aggregates: tuple[tuple[str, tuple[int, ...]], ...]
    levels: tuple[int, ...]

    def __post_init__(self):
        n_bottom = len(self.bottom_ids)
        if n_bottom == 0:
            raise HierarchyError("hierarchy needs at least one bottom series")
        ids = self.series_ids
        seen: set[str] = set()
        for series_id in ids:
            if series_id in seen:
                raise HierarchyError(f"duplicate id '{series_id}'")
            seen.add(series_id)
        for agg_id, children in self.aggregates:
            if len(children) == 0:
                raise HierarchyError(f"aggregate '{agg_id}' is empty")
            if list(children) != sorted(set(children)):
                raise HierarchyError(f"aggregate '{agg_id}' children must be sorted and duplicate-free")
            for index in children:
                if not 0 <= index < n_bottom:
                    raise HierarchyError(f"unknown bottom index {index} in aggregate '{agg_id}'")
        if len(self.levels) != len(ids):
            raise HierarchyError(f"expected {len(ids)} levels, got {len(self.levels)}")

    @property
    def n_aggregate(self) -> int:
        return len(self.aggregates)

    @property
    def n_bottom(self) -> int:
        return len(self.bottom_ids)

    @property
    def n_series(self) -> int:
        return self.n_aggregate + self.n_bottom

    @property
    def series_ids(self) -> tuple[str, ...]:
        """All ids in full-series order."""
        return tuple(agg_id for agg_id, _ in self.aggregates) + self.bottom_ids

    @property
    def level_of(self) -> dict[str, int]:
        return dict(zip(self.series_ids, self.levels))

    @cached_property
    def _summing(self) -> np.ndarray:
        data = np.zeros((self.n_series, self.n_bottom), dtype=np.float64)
        for row, (_, children) in enumerate(self.aggregates):
            data[row, list(children)] = 1.0
        data[self.n_aggregate :, :] = np.eye(self.n_bottom)
        data.setflags(write=False)
        return data


@dataclass(frozen=True)
class SummingMatrix:
    """Dense 0/1 summing matrix of shape ``(N_a + N_b, N_b)``."""

    data: np.ndarray
    n_aggregate: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


##
# Parsing.
##


def _resolve_child(child: Any, bottom_index: Mapping[str, int], n_bottom: int, agg_id: str) -> int:
    if isinstance(child, bool):
        raise HierarchyError(f"malformed child {child!r} in aggregate '{agg_id}'")
    if isinstance(child, int):
        if not 0 <= child < n_bottom:
            raise HierarchyError(f"unknown bottom index {child} in aggregate '{agg_id}'")
        return child
    if isinstance(child, str):
        if child not in bottom_index:
            raise HierarchyError(f"unknown bottom id '{child}' in aggregate '{agg_id}'")
        return bottom_index[child]
    raise HierarchyError(f"malformed child {child!r} in aggregate '{agg_id}'")


def parse_hierarchy_spec(document: str | bytes | Mapping[str, Any]) -> HierarchySpec:
    """Parse and validate a hierarchy JSON document.

    The document has the form ``{"bottom": [...], "aggregates": [{"id", "level", "children"}],
    "bottom_level": int}``. Children reference bottoms by id (or by integer index). When
    ``bottom_level`` is omitted it defaults to one past the deepest aggregate level.

    Args:
        document: JSON text or an already decoded mapping.

    Returns:
        The validated hierarchy with ids in document order.

    Raises:
        HierarchyError: On duplicate ids, unknown or empty children, or a malformed document.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as err:
            raise HierarchyError(f"malformed hierarchy document: {err}") from err
    if not isinstance(document, Mapping):
        raise HierarchyError("malformed hierarchy document: expected a JSON object")

    bottoms = document.get("bottom")
    if not isinstance(bottoms, list) or not all(isinstance(b, str) for b in bottoms):
        raise HierarchyError("malformed hierarchy document: 'bottom' must be a list of ids")
    aggregates_doc = document.get("aggregates", [])
    if not isinstance(aggregates_doc, list):
        raise HierarchyError("malformed hierarchy document: 'aggregates' must be a list")

    bottom_index: dict[str, int] = {}
    for index, bottom_id in enumerate(bottoms):
        if bottom_id in bottom_index:
            raise HierarchyError(f"duplicate id '{bottom_id}'")
        bottom_index[bottom_id] = index

    aggregates: list[tuple[str, tuple[int, ...]]] = []
    agg_levels: list[int] = []
    for entry in aggregates_doc:
        if not isinstance(entry, Mapping) or not isinstance(entry.get("id"), str):
            raise HierarchyError("malformed hierarchy document: aggregate entries need a string 'id'")
        agg_id = entry["id"]
        children = entry.get("children")
        if not isinstance(children, list):
            raise HierarchyError(f"malformed hierarchy document: aggregate '{agg_id}' has no children list")
        if len(children) == 0:
            raise HierarchyError(f"aggregate '{agg_id}' is empty")
        indices = [_resolve_child(child, bottom_index, len(bottoms), agg_id) for child in children]
        if len(set(indices)) != len(indices):
            raise HierarchyError(f"aggregate '{agg_id}' lists a child twice")
        level = entry.get("level", 0)
        if isinstance(level, bool) or not isinstance(level, int) or level < 0:
            raise HierarchyError(f"malformed level {level!r} for aggregate '{agg_id}'")
        aggregates.append((agg_id, tuple(sorted(indices))))
        agg_levels.append(level)

    bottom_level = document.get("bottom_level")
    if bottom_level is None:
        bottom_level = max(agg_levels) + 1 if agg_levels else 0
    if isinstance(bottom_level, bool) or not isinstance(bottom_level, int) or bottom_level < 0:
        raise HierarchyError(f"malformed bottom_level {bottom_level!r}")

    spec = HierarchySpec(
        bottom_ids=tuple(bottoms),
        aggregates=tuple(aggregates),
        levels=tuple(agg_levels) + (bottom_level,) * len(bottoms),
    )
    logger.debug("parsed hierarchy: N_a=%d, N_b=%d", spec.n_aggregate, spec.n_bottom)
    return spec


def hierarchy_to_dict(spec: HierarchySpec) -> dict[str, Any]:
    """Document form of a hierarchy. Children are written by bottom id in index order."""
    bottom_levels = set(spec.levels[spec.n_aggregate :])
    if len(bottom_levels) != 1:
        raise HierarchyError("bottom series must share one level to be serialized")
    return {
        "bottom": list(spec.bottom_ids),
        "aggregates": [
            {"id": agg_id, "level": level, "children": [spec.bottom_ids[i] for i in children]}
            for (agg_id, children), level in zip(spec.aggregates, spec.levels)
        ],
        "bottom_level": bottom_levels.pop(),
    }


def serialize_hierarchy_spec(spec: HierarchySpec) -> str:
    """JSON text that parses back to an equal spec."""
    return json.dumps(hierarchy_to_dict(spec), indent=2)


##
# Structure.
##


def summing_matrix(spec: HierarchySpec) -> SummingMatrix:
    """Summing matrix ``S`` with aggregate rows over the bottom identity."""
    return SummingMatrix(data=spec._summing, n_aggregate=spec.n_aggregate)


def aggregation_matrix(spec: HierarchySpec) -> np.ndarray:
    """The aggregate block ``A`` of the summing matrix, shape ``(N_a, N_b)``."""
    return spec._summing[: spec.n_aggregate]


def aggregate(spec: HierarchySpec, y_bottom: np.ndarray) -> np.ndarray:
    """Map bottom values to the full hierarchy, ``S @ y_bottom``.

    Args:
        spec: The hierarchy.
        y_bottom: Array whose first axis has length ``N_b``; trailing axes are carried along.

    Returns:
        Array with first axis of length ``N_i``.
    """
    y_bottom = np.asarray(y_bottom, dtype=np.float64)
    if y_bottom.ndim == 0 or y_bottom.shape[0] != spec.n_bottom:
        raise ShapeError(f"expected {spec.n_bottom} bottom values, got shape {y_bottom.shape}")
    return np.tensordot(spec._summing, y_bottom, axes=(1, 0))


def coherence_residual(spec: HierarchySpec, y_full: np.ndarray, axis: int = 0) -> float:
    """Maximum absolute violation of the aggregation constraints, ``max |y_a - A y_b|``.

    Args:
        spec: The hierarchy.
        y_full: Values with a series axis of length ``N_i``.
        axis: Position of the series axis.
    """
    y_full = np.moveaxis(np.asarray(y_full, dtype=np.float64), axis, 0)
    if y_full.shape[0] != spec.n_series:
        raise ShapeError(f"expected {spec.n_series} series, got {y_full.shape[0]}")
    if spec.n_aggregate == 0:
        return 0.0
    implied = np.tensordot(aggregation_matrix(spec), y_full[spec.n_aggregate :], axes=(1, 0))
    return float(np.max(np.abs(y_full[: spec.n_aggregate] - implied)))


def level_groups(spec: HierarchySpec) -> list[tuple[int, list[int]]]:
    """Series indices grouped by level, in ascending level order."""
    groups: dict[int, list[int]] = {}
    for index, level in enumerate(spec.levels):
        groups.setdefault(level, []).append(index)
    return [(level, groups[level]) for level in sorted(groups)]


def flat_hierarchy(bottom_ids: Sequence[str], level: int = 0) -> HierarchySpec:
    """Hierarchy without aggregates."""
    return HierarchySpec(bottom_ids=tuple(bottom_ids), aggregates=(), levels=(level,) * len(bottom_ids))
