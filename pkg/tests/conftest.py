import pytest

from hybrid_iiss.system import bad_example, decay_jump_demo, linear_example


@pytest.fixture(scope="session")
def bad():
    return bad_example()


@pytest.fixture(scope="session")
def jumper():
    return decay_jump_demo()


@pytest.fixture(scope="session")
def linear():
    return linear_example(1.0)
