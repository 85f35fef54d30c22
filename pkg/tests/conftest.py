import numpy as np
import pytest

from pdac_axons.model import load_paper_set
from pdac_axons.objective import Chronology, ObservationSet


@pytest.fixture
def set7():
    return load_paper_set("paper-set-7")


@pytest.fixture
def obs():
    return ObservationSet.fixture()


@pytest.fixture
def chrono():
    return Chronology()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
