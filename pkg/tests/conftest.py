import pytest

from cavity_perturb.modes import CavityGeometry, ModeIndex
from cavity_perturb.overlap import MembraneState
from cavity_perturb.spectrum import ModeBasis


@pytest.fixture
def geom() -> CavityGeometry:
    return CavityGeometry()


@pytest.fixture
def l(geom) -> int:
    return geom.longitudinal_index


@pytest.fixture
def basis(geom) -> ModeBasis:
    return ModeBasis.from_orders(geom)


@pytest.fixture
def four_mode_basis(geom) -> ModeBasis:
    """TEM00,p plus the TEM20/11/02,p-1 triplet."""
    return ModeBasis.from_orders(geom, (0, 2))


@pytest.fixture
def membrane() -> MembraneState:
    return MembraneState()


@pytest.fixture
def singlet(l) -> ModeIndex:
    return ModeIndex(l=l, m=0, n=0)


@pytest.fixture
def triplet(l) -> tuple[ModeIndex, ModeIndex, ModeIndex]:
    return ModeIndex(l=l - 1, m=2, n=0), ModeIndex(l=l - 1, m=1, n=1), ModeIndex(l=l - 1, m=0, n=2)
