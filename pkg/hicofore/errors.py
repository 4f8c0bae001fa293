# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`HicoforeError`. Subclasses also
derive from the closest builtin so callers may catch either.
"""


class HicoforeError(Exception):
    """Base class for all library errors."""


class HierarchyError(HicoforeError, ValueError):
    """Malformed or inconsistent hierarchy document."""


class ShapeError(HicoforeError, ValueError):
    """Array shapes do not conform."""


class ReconciliationError(HicoforeError, ValueError):
    """Invalid reconciliation inputs (proportions, variances, samples)."""


class SingularMatrixError(ReconciliationError):
    """The normal matrix of a projection is numerically singular."""


class DataError(HicoforeError, ValueError):
    """Panel data is missing, ragged or incoherent."""


class ConfigError(HicoforeError, ValueError):
    """Invalid training or CLI configuration."""


class MixtureError(HicoforeError, ValueError):
    """Mixture weights are negative or do not sum to one."""


class NonFiniteError(HicoforeError, FloatingPointError):
    """A loss, gradient or sample became non-finite."""

    def __init__(self, message: str, step: int | None = None, series: list[str] | None = None):
        details = []
        if step is not None:
            details.append(f"step={step}")
        if series:
            details.append(f"series={series}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.step = step
        self.series = series


class MetricError(HicoforeError, ValueError):
    """A metric is undefined for its inputs (zero denominators, bad quantile levels)."""
