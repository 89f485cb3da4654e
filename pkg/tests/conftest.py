import pytest

from charpic.geometry import CurvePair, Region, StableRegion


@pytest.fixture(scope="session")
def region22():
    """a = b = 2, x_A = 1: y_A = 0.5, y_B = 2, C = (0.25, 0.5)."""
    return Region.from_curves(CurvePair.affine(2.0, 2.0, 1.0))


@pytest.fixture(scope="session")
def stable_region():
    return StableRegion.from_curves(CurvePair.affine(1.0, 0.5, 1.0))
