import pathlib
import sys

import pytest

TESTS_DIR = pathlib.Path(__file__).parent
sys.path.insert(0, str(TESTS_DIR))

import fixture_defs  # noqa: E402


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return TESTS_DIR / "fixtures"


@pytest.fixture(scope="session")
def quadrant_net():
    return fixture_defs.quadrant_net()


@pytest.fixture(scope="session")
def flagflip_net():
    return fixture_defs.flagflip_net()


@pytest.fixture(scope="session")
def identity_net():
    return fixture_defs.identity_net()


@pytest.fixture(scope="session")
def conv_mixed_net():
    return fixture_defs.conv_mixed_net()


@pytest.fixture(scope="session")
def sigmoid_pair_net():
    return fixture_defs.sigmoid_pair_net()


@pytest.fixture(scope="session")
def quadrant_dataset():
    return fixture_defs.quadrant_dataset()


@pytest.fixture(scope="session")
def probe_images():
    return fixture_defs.probe_images()
