import math

import pytest
from pydantic import ValidationError

from models.schemas import NonlinearitySpec, PotentialSpec, RunConfig, TruncationParams


def test_default_run_resolves_slope_and_bounds():
    config = RunConfig()
    alpha1 = 1.0 - 0.3 / math.e
    assert config.potential.alpha1 == pytest.approx(alpha1)
    assert config.potential.alpha2 == pytest.approx(1.0 + 0.3 / math.e)
    assert config.nonlinearity.mu == pytest.approx(3.0)
    assert config.truncation.a == pytest.approx(0.9 * (1.0 - 2.0 / 3.0) * alpha1)
    assert config.potential.radius_candidates == [config.truncation.radii[1]]


def test_slope_above_bound_is_rejected():
    with pytest.raises(ValidationError, match="slope bound"):
        RunConfig.model_validate({"truncation": {"a": 0.5}})


def test_radii_must_increase():
    with pytest.raises(ValidationError):
        TruncationParams(radii=[0.3, 0.9, 0.8, 1.1, 1.2])


def test_mu_outside_range_is_rejected():
    with pytest.raises(ValidationError):
        NonlinearitySpec(exponents=[3.0], mu=4.5)
    with pytest.raises(ValidationError):
        NonlinearitySpec(exponents=[3.0], mu=2.0)


def test_supercritical_exponent_rejected_in_three_dimensions():
    with pytest.raises(ValidationError, match="subcritical"):
        RunConfig.model_validate({"nonlinearity": {"exponents": [6.0]}, "limit_problem": {"dimension": 3}})


def test_custom_potential_needs_declared_bounds():
    terms = [{"coefficient": -0.5, "powers": [4, 0]}]
    with pytest.raises(ValidationError):
        PotentialSpec(kind="custom_polynomial_bump", terms=terms)
    spec = PotentialSpec(kind="custom_polynomial_bump", terms=terms, alpha1=0.7, alpha2=1.0)
    assert spec.alpha1 == 0.7


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"grid": {"points": 10}})


def test_fixed_spacing_keeps_h_across_eps():
    config = RunConfig.model_validate({"grid": {"spacing": 0.25}})
    for eps in (0.2, 0.1, 0.05):
        problem = config.problem_for(eps)
        assert problem.h == pytest.approx(0.25)
        assert problem.L >= config.truncation.radii[4] / eps + config.grid.L_margin


def test_config_survives_json_round_trip():
    config = RunConfig.model_validate({"potential": {"kind": "gaussian_max"}, "sweep": {"eps_list": [0.2, 0.1]}})
    again = RunConfig.model_validate_json(config.model_dump_json())
    assert again == config
