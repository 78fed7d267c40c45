import numpy as np
import pytest

from core.exceptions import BracketError
from models.results import RadialProfile
from services.limit_problem import (
    build_mp_curve,
    energy_phi,
    m_curve,
    nehari_residual,
    pohozaev_residual,
    scaled_energy,
    solve_ground_state,
    state_from_profile,
)


def test_planar_cubic_identities(planar_state):
    assert pohozaev_residual(planar_state) < 1e-6
    assert nehari_residual(planar_state) < 1e-6
    assert planar_state.grad_norm_sq == pytest.approx(planar_state.l2_norm_sq, rel=1e-5)
    # m = 1/2 ||grad U||^2 when N = 2
    assert planar_state.energy == pytest.approx(0.5 * planar_state.grad_norm_sq, rel=1e-5)


def test_planar_cubic_profile_shape(planar_state):
    profile = planar_state.profile
    assert profile.U0 == pytest.approx(2.2062, abs=1e-3)
    assert np.all(profile.values > 0.0)
    assert np.all(np.diff(profile.values) < 0.0)
    assert planar_state.decay_rate == pytest.approx(1.0, abs=0.05)


def test_energy_phi_agrees_with_state(planar_state):
    assert energy_phi(1.0, planar_state) == pytest.approx(planar_state.energy, rel=1e-12)


def test_scaling_law_for_planar_cubic(cubic, planar_state):
    m1 = planar_state.energy
    for k in (0.5, 2.0, 4.0):
        state = solve_ground_state(k, cubic, 2)
        assert state.energy == pytest.approx(k * m1, rel=1e-6)


def test_m_curve_increasing_for_mixed_powers(mixed):
    table = m_curve(np.linspace(0.5, 2.0, 8), mixed, 2, n_points=2048)
    assert len(table) == 8
    assert np.all(np.diff(table["m_k"].to_numpy()) > 0.0)
    assert table["pohozaev"].max() < 1e-5


def test_three_dimensional_ground_state(cubic):
    state = solve_ground_state(1.0, cubic, 3)
    assert pohozaev_residual(state) < 1e-6
    assert nehari_residual(state) < 1e-6


def test_scaled_energy_identity(planar_state):
    assert scaled_energy(planar_state, 1.0, 1.0) == pytest.approx(planar_state.energy, rel=1e-12)
    assert scaled_energy(planar_state, 0.0, 2.0) == 0.0


def test_planar_path_is_admissible(planar_state, planar_curve):
    m = planar_state.energy
    assert planar_curve.energies[-1] < -0.5 * m
    assert planar_curve.energy_max == pytest.approx(m, rel=1e-5)
    assert planar_curve.energies[0] == 0.0
    i = int(np.argmin(np.abs(planar_curve.t - planar_curve.t_star)))
    assert planar_curve.amplitudes[i] == 1.0 and planar_curve.dilations[i] == 1.0
    assert planar_curve.params_at(planar_curve.t_star) == pytest.approx((1.0, 1.0))


def test_dilation_path_in_three_dimensions(cubic):
    state = solve_ground_state(1.0, cubic, 3)
    curve = build_mp_curve(state)
    assert curve.theta is not None
    assert curve.energies[-1] < -0.5 * state.energy
    assert curve.energy_max == pytest.approx(state.energy, rel=1e-5)


def test_nonpositive_k_is_rejected(cubic):
    with pytest.raises(BracketError):
        solve_ground_state(0.0, cubic, 2)


def test_doubled_profile_is_below_the_ground_level(planar_state):
    assert scaled_energy(planar_state, 2.0, 1.0) < planar_state.energy
    assert scaled_energy(planar_state, 2.0, 1.0) < 0.0


def test_perturbed_profile_breaks_pohozaev(cubic, planar_state):
    profile = planar_state.profile
    bump = 0.1 * np.exp(-profile.r ** 2)
    perturbed = RadialProfile(
        r=profile.r,
        values=profile.values + bump,
        derivatives=profile.derivatives - 2.0 * profile.r * bump,
        k=profile.k,
        dimension=profile.dimension,
    )
    state = state_from_profile(perturbed, cubic)
    assert pohozaev_residual(state) > 1e-5
    assert nehari_residual(state) > 1e-5
