import pytest

from blowup import expansion, shoot
from blowup.nonlinearity import parse_nonlinearity


@pytest.fixture(scope="session")
def pow3():
    return parse_nonlinearity("pow:3")


@pytest.fixture(scope="session")
def pow5():
    return parse_nonlinearity("pow:5")


@pytest.fixture(scope="session")
def expo():
    return parse_nonlinearity("exp")


@pytest.fixture(scope="session")
def pow5_iteration(pow5):
    """v_0..v_5 for pow:5, N=3 at the automatically chosen U0."""
    return expansion.iterate_to_convergence(pow5, 3, tol=0.0, kmax=5)


@pytest.fixture(scope="session")
def pow5_profiles(pow5_iteration):
    return [expansion.BlowupProfile(vp) for vp in pow5_iteration.profiles]


@pytest.fixture(scope="session")
def pow3_profiles(pow3):
    res = expansion.iterate_to_convergence(pow3, 3, tol=0.0, kmax=2)
    return [expansion.BlowupProfile(vp) for vp in res.profiles]


@pytest.fixture(scope="session")
def pow3_shot(pow3):
    alpha = shoot.calibrate_alpha(pow3, 3, 1.0, tol=1e-10)
    return shoot.shoot(pow3, 3, alpha)


@pytest.fixture(scope="session")
def pow5_shot(pow5):
    alpha = shoot.calibrate_alpha(pow5, 3, 1.0, tol=1e-10)
    return shoot.shoot(pow5, 3, alpha)
