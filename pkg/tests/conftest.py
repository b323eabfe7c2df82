import numpy as np
import pytest

from beamflow.array import ArraySpec
from beamflow.medium import MediumStats
from beamflow.transport.kernels import FlowVelocity, SourceSpec, Wavenumbers


@pytest.fixture
def stats():
    return MediumStats(c_o=340.0, sigma_c=0.02, ell=1.7, T_corr=0.25)


@pytest.fixture
def wn():
    return Wavenumbers(k_o=37.0, c_o=340.0)


@pytest.fixture
def flow1():
    return FlowVelocity(v_perp=np.array([0.4]))


@pytest.fixture
def flow2():
    return FlowVelocity(v_perp=np.array([0.4, -0.25]))


@pytest.fixture
def harmonic_source():
    return SourceSpec(ell_s=1.2, sigma=1.0, T_s=1.0, harmonic=True)


@pytest.fixture
def pulse_source():
    return SourceSpec(ell_s=0.85, T_s=1.0, sigma_s=1.0, harmonic=False)


@pytest.fixture
def array1():
    return ArraySpec(x_o=np.array([2.0]), kappa=300.0)
