import pytest

import veclyap as vl


@pytest.fixture(scope="session")
def example1():
    return vl.build_scenario("example1")


@pytest.fixture(scope="session")
def lorenz():
    return vl.build_scenario("lorenz-network")
