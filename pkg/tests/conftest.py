import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dqe import pauli


@pytest.fixture(scope="session")
def heis2():
    return pauli.build_heisenberg_chain(2)


@pytest.fixture(scope="session")
def heis3():
    return pauli.build_heisenberg_chain(3)


@pytest.fixture(scope="session")
def heis4():
    return pauli.build_heisenberg_chain(4)


@pytest.fixture(scope="session")
def spec2(heis2):
    return pauli.diagonalize(heis2)


@pytest.fixture(scope="session")
def spec3(heis3):
    return pauli.diagonalize(heis3)


@pytest.fixture(scope="session")
def spec4(heis4):
    return pauli.diagonalize(heis4)


@pytest.fixture(scope="session")
def ham_z():
    return pauli.PauliHamiltonian(1, (pauli.PauliTerm(1.0, pauli.PauliString("Z")),))


@pytest.fixture(scope="session")
def maxsat_single():
    return pauli.build_maxsat(2, [((0, 1), "11")])


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
