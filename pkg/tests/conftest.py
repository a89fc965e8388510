import numpy as np
import pytest

from microrelay.ops.registry import fresh_registry

from .helpers import CORPUS_FILES


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def registry():
    """A private operator registry, so registrations never leak between tests."""
    return fresh_registry()


def pytest_generate_tests(metafunc):
    if "corpus_file" in metafunc.fixturenames:
        metafunc.parametrize("corpus_file", CORPUS_FILES, ids=[p.stem for p in CORPUS_FILES])
