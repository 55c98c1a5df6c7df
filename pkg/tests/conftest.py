import pytest

from nliv import derived_rng


@pytest.fixture
def rng():
    return derived_rng(20240817)
