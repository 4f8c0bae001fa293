# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Hierarchically coherent probabilistic forecasting.

A multivariate Gaussian mixture forecaster trained by composite likelihood on
scale-normalized inputs, made coherent by bootstrap sample reconciliation.
"""

import os
from importlib import metadata

import toml

# Conveniences to other module directories via relative paths
HICOFORE_EXT_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
"""Path to the project source directory."""

_METADATA_FILE = os.path.join(HICOFORE_EXT_DIR, "config", "extension.toml")

if os.path.isfile(_METADATA_FILE):
    HICOFORE_METADATA = toml.load(_METADATA_FILE)
    """Project metadata dictionary parsed from the extension.toml file."""
else:
    # installed without the source tree
    HICOFORE_METADATA = {"package": {"version": metadata.version("hicofore"), "title": "hicofore"}}

# Configure the module-level variables
__version__ = HICOFORE_METADATA["package"]["version"]

from .errors import (  # noqa: E402
    ConfigError,
    DataError,
    HicoforeError,
    HierarchyError,
    MetricError,
    NonFiniteError,
    ReconciliationError,
    ShapeError,
    SingularMatrixError,
)
from .hierarchy import HierarchySpec, parse_hierarchy_spec, summing_matrix  # noqa: E402
