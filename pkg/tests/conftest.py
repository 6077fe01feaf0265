import numpy as np
import pytest

from qhdtori.dispersion import ModelParams
from qhdtori.lattice import Grid, Lattice, TorusShape


@pytest.fixture(scope="session")
def shape():
    return TorusShape((2.0, 3.0))


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def lattice(shape):
    return Lattice.ball(8, shape)


@pytest.fixture(scope="session")
def small_lattice(shape):
    return Lattice.ball(4, shape)


@pytest.fixture(scope="session")
def grid(shape):
    return Grid(shape, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
