import numpy as np
import pytest

from nsbayes.spectral import SpectralField, build_lattice


@pytest.fixture(scope="session")
def lat8():
    return build_lattice(8)


@pytest.fixture(scope="session")
def lat16():
    return build_lattice(16)


@pytest.fixture(scope="session")
def lat32():
    return build_lattice(32)


def random_field(lattice, rng, decay=0.1, scale=1.0):
    """Hermitian random field with smoothly decaying spectrum."""
    m = lattice.modes_per_dim
    g = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    coeffs = lattice.hermitianize(g) * scale * np.exp(-decay * lattice.eigenvalues)
    coeffs[~lattice.mode_mask] = 0.0
    return SpectralField(lattice, coeffs)
