import numpy as np
import pytest

from algmech import euclidean, planar_body, robotic_leg, snakeboard, suslov


@pytest.fixture(scope="session")
def planar():
    return planar_body()


@pytest.fixture(scope="session")
def leg():
    return robotic_leg()


@pytest.fixture(scope="session")
def board():
    return snakeboard()


@pytest.fixture(scope="session")
def flat2():
    return euclidean(2)


@pytest.fixture(scope="session")
def top():
    """Unconstrained rigid body on the full three-dimensional algebra."""
    return suslov((1.0, 2.0, 3.0), (0, 1, 2))


@pytest.fixture(scope="session")
def all_builtins(planar, leg, board, flat2, top):
    return [planar, leg, board, flat2, top]


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
