# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Shared fixtures: the country/state/region hierarchy and small synthetic panels."""

import json

import pytest

from hicofore.forecaster import TrainConfig, load_cfg_from_registry
from hicofore.hierarchy import parse_hierarchy_spec
from hicofore.pipeline import synth_hierarchy

REGION_DOCUMENT = {
    "bottom": ["r1", "r2", "r3", "r4"],
    "aggregates": [
        {"id": "Total", "level": 0, "children": ["r1", "r2", "r3", "r4"]},
        {"id": "s1", "level": 1, "children": ["r1", "r2"]},
        {"id": "s2", "level": 1, "children": ["r3", "r4"]},
    ],
    "bottom_level": 2,
}

PAIR_DOCUMENT = {
    "bottom": ["b1", "b2"],
    "aggregates": [{"id": "Total", "level": 0, "children": ["b1", "b2"]}],
    "bottom_level": 1,
}


@pytest.fixture
def region_document() -> str:
    """Total over two states over four regions."""
    return json.dumps(REGION_DOCUMENT)


@pytest.fixture
def region_spec():
    return parse_hierarchy_spec(REGION_DOCUMENT)


@pytest.fixture
def pair_spec():
    """Total over two bottoms, the 3-series example."""
    return parse_hierarchy_spec(PAIR_DOCUMENT)


@pytest.fixture
def smoke_cfg() -> TrainConfig:
    """Small network that trains in well under a second per step."""
    return load_cfg_from_registry("smoke")


@pytest.fixture
def small_panel():
    """Four seasonal bottoms with pair groups, long enough for the smoke config."""
    return synth_hierarchy(4, 60, correlation=0.3, season_length=6, noise_scale=0.5, horizon=4, seed=3)
