import pytest

from parkedcan import reference_vehicle


@pytest.fixture(scope="session")
def reference():
    return reference_vehicle()
