import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from utils import ConfigManager  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet_config(tmp_path):
    """A fresh ConfigManager on schema defaults that prints nothing."""
    ConfigManager.reset()
    ConfigManager.initialize(config_path=str(tmp_path / 'absent.yaml'))
    ConfigManager.set_config_value(False, 'misc', 'print_to_terminal')
    ConfigManager.set_config_value(False, 'misc', 'progress_bar')
    yield ConfigManager
    ConfigManager.reset()
