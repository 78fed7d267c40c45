import numpy as np
import pytest

from core.exceptions import BarycenterUndefinedError, ConvergenceError, GeometryMismatchError
from models.results import GridField
from models.schemas import NonlinearitySpec, PotentialSpec, TruncationParams, EpsProblem
from services.grid_solver import (
    MIN_STEP,
    GridProblem,
    barycenter,
    directional_derivative,
    energy,
    gradient,
    h1_norm,
    interpolate_radial,
    l2_norm,
    newton_solve,
    plain_residual,
    translate,
)
from services.nonlinearity import F_eval
from services.potential import certified_bounds


def _problem(eps=0.5, n=33, L=4.0, kind="constant", e_basis=((1.0, 0.0),)):
    return EpsProblem(
        eps=eps,
        truncation=TruncationParams(a=0.25, alpha1=0.9),
        potential=PotentialSpec(kind=kind),
        nonlinearity=NonlinearitySpec(),
        n=n,
        L=L,
        margin=1.0,
        e_basis=[list(v) for v in e_basis],
    )


@pytest.fixture
def grid():
    return GridProblem(_problem(kind="gaussian_saddle"))


def _random_field(grid, rng, scale=2.0, low=0.0):
    values = low + scale * rng.uniform(0.0, 1.0, (grid.n, grid.n))
    values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
    return grid.field(values)


def test_energy_gradient_consistency(grid):
    rng = np.random.default_rng(7)
    for _ in range(20):
        # stay clear of the crossover kink so central differences are second order
        u = _random_field(grid, rng, scale=1.5, low=grid.crossover + 0.1)
        phi = _random_field(grid, rng, scale=2.0, low=-1.0)
        errors = []
        for t in (1e-3, 5e-4):
            plus = energy(grid, u.with_values(u.values + t * phi.values))
            minus = energy(grid, u.with_values(u.values - t * phi.values))
            errors.append(abs((plus - minus) / (2 * t) - directional_derivative(grid, u, phi)))
        scale = max(1.0, abs(directional_derivative(grid, u, phi)))
        assert errors[0] < 1e-5 * scale
        # central differences: halving t cuts the error by about four
        assert errors[1] <= 0.3 * errors[0] + 1e-9 * scale


def test_gradient_vanishes_on_boundary(grid):
    rng = np.random.default_rng(8)
    R = gradient(grid, _random_field(grid, rng)).values
    assert np.all(R[0, :] == 0.0) and np.all(R[:, -1] == 0.0)


def test_residuals_agree_below_crossover(grid):
    rng = np.random.default_rng(9)
    u = _random_field(grid, rng, scale=0.99 * grid.crossover)
    assert np.array_equal(gradient(grid, u).values, plain_residual(grid, u).values)


def test_laplacian_matches_sparse_operator(grid):
    rng = np.random.default_rng(10)
    values = _random_field(grid, rng).values
    stencil = grid.interior(grid.neg_laplacian_full(values))
    assert np.allclose(stencil, grid.neg_laplacian @ grid.interior(values), rtol=1e-12, atol=1e-10)


def test_geometry_mismatch_is_rejected(grid):
    with pytest.raises(GeometryMismatchError):
        energy(grid, GridField(n=grid.n + 2, L=grid.L, values=np.zeros((grid.n + 2, grid.n + 2))))


def test_barycenter_of_centred_and_shifted_bumps():
    grid = GridProblem(_problem(eps=0.2, n=65, L=8.0))
    X1, X2 = grid.points[..., 0], grid.points[..., 1]
    centred = grid.field(np.exp(-(X1 ** 2 + X2 ** 2)))
    assert np.allclose(barycenter(grid, centred), 0.0, atol=1e-12)
    shifted = grid.field(np.exp(-((X1 - 1.0) ** 2 + X2 ** 2)))
    assert barycenter(grid, shifted)[0] == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(BarycenterUndefinedError):
        barycenter(grid, grid.field(np.zeros((grid.n, grid.n))))


def test_translate_by_lattice_steps():
    u = GridField(n=5, L=2.0, values=np.arange(25.0).reshape(5, 5))
    moved = translate(u, (1, 0))
    assert np.array_equal(moved.values[1:, :], u.values[:-1, :])
    assert np.all(moved.values[0, :] == 0.0)


def test_newton_recovers_autonomous_ground_state(planar_state):
    problem = _problem(eps=0.1, n=257, L=20.0)
    grid = GridProblem(problem)
    seed = interpolate_radial(planar_state.profile, n=grid.n, L=grid.L, amplitude=1.05, dilation=0.97)
    for method in ("minres", "direct"):
        solution = newton_solve(grid, seed, tol=1e-9, linear_solver=method)
        assert solution.residual < 1e-9
        assert grid.energy(solution.field.values) == pytest.approx(planar_state.energy, rel=2e-2)
        assert solution.field.values.max() == pytest.approx(planar_state.profile.U0, rel=2e-2)


def test_newton_gives_up_when_the_step_is_uphill(monkeypatch, planar_state):
    grid = GridProblem(_problem(eps=0.1, n=65, L=10.0))
    original = GridProblem.linear_solve

    def reversed_step(self, *args, **kwargs):
        return -original(self, *args, **kwargs)

    monkeypatch.setattr(GridProblem, "linear_solve", reversed_step)
    seed = interpolate_radial(planar_state.profile, n=grid.n, L=grid.L, amplitude=1.05, dilation=0.97)
    with pytest.raises(ConvergenceError, match=f"alpha={MIN_STEP:g}"):
        newton_solve(grid, seed, tol=1e-9)


def test_truncated_energy_dominates_the_alpha1_functional():
    grid = GridProblem(_problem(kind="gaussian_saddle"))
    alpha1 = certified_bounds(grid.problem.potential)[0]
    spec = grid.problem.nonlinearity
    X1, X2 = grid.points[..., 0], grid.points[..., 1]
    for center, amplitude in (((0.0, 0.0), 3.0), ((2.5, 0.0), 4.0), ((-1.5, 2.0), 1.0), ((3.0, 3.0), 6.0)):
        values = amplitude * np.exp(-((X1 - center[0]) ** 2 + (X2 - center[1]) ** 2))
        values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
        bulk = 0.5 * alpha1 * values ** 2 - F_eval(spec, values)
        phi = 0.5 * grid.edge_sum(values) + grid.h ** 2 * float(np.sum(bulk[1:-1, 1:-1]))
        assert grid.energy(values) >= phi - 1e-12 * abs(phi)


def test_outside_mask_covers_the_cut_off_region(grid):
    R1 = grid.problem.truncation.radii[1]
    outside = grid.physical_radius > R1
    assert outside.any()
    assert np.all(outside | (grid.nonlinearity.chi(grid.points) == 1.0))


def test_norms_are_shift_invariant_for_interior_support():
    values = np.zeros((21, 21))
    values[8:13, 7:12] = np.arange(25.0).reshape(5, 5) / 25.0
    u = GridField(n=21, L=5.0, values=values)
    moved = translate(u, (2, -3))
    assert l2_norm(moved) == pytest.approx(l2_norm(u), rel=1e-14)
    assert h1_norm(moved) == pytest.approx(h1_norm(u), rel=1e-14)
    assert h1_norm(u) > l2_norm(u)


@pytest.mark.slow
def test_refinement_reduces_autonomous_energy_error(planar_state):
    errors = []
    for n in (129, 257):
        grid = GridProblem(_problem(eps=0.1, n=n, L=20.0))
        seed = interpolate_radial(planar_state.profile, n=grid.n, L=grid.L)
        solution = newton_solve(grid, seed, tol=1e-10, linear_solver="direct")
        errors.append(abs(grid.energy(solution.field.values) - planar_state.energy))
    assert errors[1] * 3.0 <= errors[0]
