# tests/conftest.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import numpy as np
import pytest

from core.motion import IdentityLaw, IntervalDomain, MovingDomain, disk
from core.solver import build_reference_grid
from domain.config import loads_config
from tests.helpers import small_config_text


@pytest.fixture
def unit_interval() -> MovingDomain:
    return MovingDomain(IntervalDomain(1.0), IdentityLaw(1), 1.0)


@pytest.fixture
def unit_disk() -> MovingDomain:
    return MovingDomain(disk(1.0), IdentityLaw(2), 1.0)


@pytest.fixture
def interval_grid(unit_interval):
    return build_reference_grid(unit_interval.reference, 100)


@pytest.fixture
def small_cfg(tmp_path):
    return loads_config(small_config_text(out=str(tmp_path / "out")))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
