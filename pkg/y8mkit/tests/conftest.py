"""Support for pytest."""

import pytest

from ..data import generate_dataset
from ..data import write_splits
from ._core import tiny_spec


def pytest_addoption(parser):
    """Command-line switch for the long-running checks."""
    parser.addoption("--runslow", action="store_true", default=False, help="run tests marked slow")


def pytest_configure(config):
    """Register the ``slow`` marker."""
    config.addinivalue_line("markers", "slow: full-scale run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    """Skip ``slow`` tests unless ``--runslow`` was given."""
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def tiny_splits():
    """Train, validate, and test splits of the tiny dataset."""
    return generate_dataset(tiny_spec())


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory, tiny_splits):
    """Directory holding the tiny dataset files."""
    path = tmp_path_factory.mktemp("data")
    return write_splits(tiny_splits, path, tiny_spec())
