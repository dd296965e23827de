"""Shared pytest setup: bare-name imports from src/ and an isolated user config"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent
sys.path.insert(0, str(ROOT / "src"))

# Point the config manager at a file that does not exist so the defaults apply
os.environ["EMBEDMAP_CONFIG"] = str(ROOT / ".pytest-embedmap-config.toml")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
