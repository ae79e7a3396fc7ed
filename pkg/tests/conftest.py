import numpy as np
import pytest

from msras.decomp import build_decomposition, build_partition_of_unity
from msras.grid import (
    BoundarySpec,
    CartesianGrid,
    CoefficientField,
    assemble,
    gaussian_bump_source,
    skyscraper_coefficient,
)


def make_system(nx, ny=None, contrast=None, bc=None, source=gaussian_bump_source, seed=7):
    ny = nx if ny is None else ny
    grid = CartesianGrid(nx, ny)
    if contrast is None:
        coeff = CoefficientField.constant(grid, 1.0)
    else:
        coeff = skyscraper_coefficient(grid, contrast, (8, 8), 0.3, seed)
    bc = bc or BoundarySpec.mixed_flux_channel()
    return assemble(grid, coeff, bc, source=source)


@pytest.fixture(scope="session")
def system16():
    return make_system(16, contrast=1e3)


@pytest.fixture(scope="session")
def decomp16(system16):
    return build_decomposition(system16, 2, 2, 1, 2)


@pytest.fixture(scope="session")
def pu16(decomp16):
    return build_partition_of_unity(decomp16)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
