import numpy as np
import pytest

from heatctrl.fem import FemSpace, TimeGrid, build_mesh
from heatctrl.field import FieldSpec, build_affine


@pytest.fixture(scope="session")
def mesh3():
    return build_mesh(3)


@pytest.fixture(scope="session")
def space3(mesh3):
    return FemSpace(mesh3)


@pytest.fixture(scope="session")
def mesh4():
    return build_mesh(4)


@pytest.fixture(scope="session")
def space4(mesh4):
    return FemSpace(mesh4)


@pytest.fixture(scope="session")
def grid20():
    return TimeGrid(20, 1.0)


@pytest.fixture(scope="session")
def spec13():
    return FieldSpec(decay=1.3)


@pytest.fixture(scope="session")
def aff3(mesh3, spec13):
    return build_affine(mesh3, spec13, 4)


@pytest.fixture()
def rng():
    return np.random.default_rng(823)
