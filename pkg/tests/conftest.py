import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridvolt.data import bundled_path
from gridvolt.network import load_network_file


@pytest.fixture(scope="session")
def sixbus():
    return load_network_file(bundled_path("sixbus.net"))


@pytest.fixture(scope="session")
def feeder123():
    return load_network_file(bundled_path("feeder123.net"))
