"""Shared fixtures; puts src/ on the import path"""

import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.geometry import ProtocolConfig  # noqa: E402


@pytest.fixture
def nested_cfg():
    return ProtocolConfig(d=1, alpha=1.0, n=3, variant="nested")


@pytest.fixture
def physical_cfg():
    return ProtocolConfig(d=1, alpha=1.0, n=3, variant="physical", beta=1.0,
                          center_rule="geometric")


@pytest.fixture
def disjoint_cfg():
    return ProtocolConfig(d=1, alpha=1.0, n=4, variant="disjoint", beta=1.0,
                          center_rule="geometric")
