import pytest

from models.schemas import NonlinearitySpec, RunConfig
from services.limit_problem import build_mp_curve, solve_ground_state


@pytest.fixture(scope="session")
def cubic() -> NonlinearitySpec:
    return NonlinearitySpec()


@pytest.fixture(scope="session")
def mixed() -> NonlinearitySpec:
    return NonlinearitySpec(kind="sum_of_powers", exponents=[3.0, 4.0], coefficients=[1.0, 0.5])


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    return RunConfig()


@pytest.fixture(scope="session")
def planar_state(cubic):
    return solve_ground_state(1.0, cubic, 2)


@pytest.fixture(scope="session")
def planar_curve(planar_state):
    return build_mp_curve(planar_state, 2)


def small_config(**sections) -> RunConfig:
    """Default run on a coarse grid, for tests that only need the geometry"""
    data = {"grid": {"n": 65, "L_margin": 8.0}}
    data.update(sections)
    return RunConfig.model_validate(data)
