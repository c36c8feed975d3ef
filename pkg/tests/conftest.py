import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

CONFIG_DIR = ROOT / 'configs'


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def config_dir():
    return CONFIG_DIR
