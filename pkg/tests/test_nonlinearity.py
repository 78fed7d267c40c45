import numpy as np
import pytest

from core.exceptions import ConfigError
from models.schemas import NonlinearitySpec, TruncationParams
from services.nonlinearity import (
    F_eval,
    Ftilde_eval,
    G_eps_eval,
    G_eval,
    TruncatedNonlinearity,
    check_hypotheses,
    chi_eval,
    chi_grad,
    crossover_threshold,
    f_eval,
    ftilde_eval,
    g_eps_eval,
    g_eval,
    growth_bound_check,
    truncation_suite,
)


@pytest.fixture
def params():
    return TruncationParams(a=0.25, radii=[0.3, 0.9, 1.0, 1.1, 1.2], alpha1=0.9)


def test_crossover_closed_form_for_pure_power(cubic):
    assert crossover_threshold(cubic, 0.3) == 0.3 ** 0.5


def test_crossover_for_sum_of_powers(mixed):
    r = crossover_threshold(mixed, 0.3)
    assert f_eval(mixed, r) / r == pytest.approx(0.3, rel=1e-12)


def test_crossover_needs_positive_slope(cubic):
    with pytest.raises(ConfigError):
        crossover_threshold(cubic, 0.0)


def test_f_vanishes_on_negative_axis(cubic):
    s = np.array([-3.0, -1e-3, 0.0])
    assert np.all(f_eval(cubic, s) == 0.0)
    assert np.all(F_eval(cubic, s) == 0.0)


def test_ftilde_below_f_and_linear_bound(mixed):
    a = 0.2
    s = np.linspace(0.0, 10.0, 2001)
    ft = ftilde_eval(mixed, a, s)
    assert np.all(ft <= f_eval(mixed, s) + 1e-14)
    assert np.all(ft <= a * s + 1e-14)


def test_Ftilde_continuous_at_crossover(cubic):
    a = 0.25
    r = crossover_threshold(cubic, a)
    below = Ftilde_eval(cubic, a, r * (1.0 - 1e-9), r)
    above = Ftilde_eval(cubic, a, r * (1.0 + 1e-9), r)
    assert above == pytest.approx(below, rel=1e-7)


def test_g_is_f_inside_B1_bit_for_bit(cubic, params):
    rng = np.random.default_rng(1)
    angles = rng.uniform(0.0, 2.0 * np.pi, 500)
    radii = rng.uniform(0.0, params.radii[1], 500)
    x = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    s = rng.uniform(0.0, 5.0, 500)
    assert np.array_equal(g_eval(cubic, params, x, s), f_eval(cubic, s))


def test_g_interpolates_on_ramp(cubic, params):
    x = np.array([[0.95, 0.0]])
    s = np.array([3.0])
    g = g_eval(cubic, params, x, s)
    r = crossover_threshold(cubic, params.slope)
    assert ftilde_eval(cubic, params.slope, s, r)[0] < g[0] < f_eval(cubic, s)[0]
    assert g[0] == pytest.approx(0.5 * (f_eval(cubic, 3.0) + ftilde_eval(cubic, params.slope, 3.0, r)))


def test_G_below_F_everywhere(cubic, params):
    rng = np.random.default_rng(2)
    x = rng.uniform(-2.0, 2.0, (1000, 2))
    s = rng.uniform(-1.0, 6.0, 1000)
    assert np.all(G_eval(cubic, params, x, s) <= F_eval(cubic, s) + 1e-12)


def test_chi_profile(params):
    assert chi_eval(params, np.zeros(2)) == 1.0
    assert chi_eval(params, np.array([0.95, 0.0])) == pytest.approx(0.5)
    assert chi_eval(params, np.array([0.0, 1.5])) == 0.0


def test_chi_gradient_matches_difference_quotient(params):
    x = np.array([0.6, 0.7])
    step = 1e-7
    numeric = [
        (chi_eval(params, x + step * e) - chi_eval(params, x - step * e)) / (2.0 * step) for e in np.eye(2)
    ]
    assert np.allclose(chi_grad(params, x), numeric, atol=1e-6)


def test_growth_bound_rejects_nonpositive_delta(cubic):
    with pytest.raises(ConfigError):
        growth_bound_check(cubic, 0.0)


def test_growth_bound_is_one_for_the_cubic_at_its_own_power(cubic):
    assert growth_bound_check(cubic, 0.1) == pytest.approx(1.0, rel=1e-6)


def test_growth_bound_for_the_cubic_against_a_quartic_witness():
    spec = NonlinearitySpec(p=4.0)
    # sup of (s^3 - delta s) / s^4 is reached at s^2 = 3 delta
    assert growth_bound_check(spec, 0.1) == pytest.approx((2.0 / 3.0) / np.sqrt(0.3), rel=1e-6)


def test_growth_bound_shrinks_as_delta_grows(mixed):
    constants = [growth_bound_check(mixed, delta) for delta in (0.01, 0.1, 0.5, 1.0)]
    assert all(b <= a for a, b in zip(constants, constants[1:]))


def test_hypotheses_hold_for_power_family(cubic, mixed):
    for spec in (cubic, mixed):
        results = check_hypotheses(spec, 2)
        assert all(r.passes for r in results), [r for r in results if not r.passes]


def test_truncation_suite_passes(cubic, mixed, params):
    for spec in (cubic, mixed):
        results = truncation_suite(spec, params, n_samples=2000, seed=3)
        assert {r.name for r in results} >= {"ftilde_below_f_and_as", "G_below_F", "g_equals_f", "growth_bound"}
        assert all(r.passes for r in results), [r for r in results if not r.passes]


def test_truncated_nonlinearity_scales_space(cubic, params):
    eps = 0.1
    nonlinearity = TruncatedNonlinearity(cubic, params, eps)
    x = np.array([[9.5, 0.0]])
    s = np.array([2.0])
    assert nonlinearity.g(x, s)[0] == g_eval(cubic, params, eps * x, s)[0]
    assert nonlinearity.r == crossover_threshold(cubic, params.slope)


def test_scaled_variants_evaluate_at_eps_x(cubic, params):
    eps = 0.2
    x = np.array([[4.75, 0.0], [1.0, 1.0], [8.0, 0.0]])
    s = np.array([3.0, 1.0, 2.5])
    assert np.array_equal(g_eps_eval(cubic, params, eps, x, s), g_eval(cubic, params, eps * x, s))
    assert np.array_equal(G_eps_eval(cubic, params, eps, x, s), G_eval(cubic, params, eps * x, s))
