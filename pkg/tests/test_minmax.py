import numpy as np
import pytest
from scipy.sparse.linalg import spsolve

from core.exceptions import BoundaryGapError, SaddleDivergenceError
from models.schemas import EpsProblem, NonlinearitySpec, PotentialSpec, TruncationParams
from services.grid_solver import GridProblem, interpolate_radial
from services.minmax import (
    TIE_RTOL,
    boundary_gap,
    cone_max_energy,
    constrained_saddle,
    default_t0,
    degree_check,
    degree_sweep,
    psi_map,
)
from services.pipeline import SpikePipeline
from tests.conftest import small_config


@pytest.fixture(scope="module")
def saddle_pipeline():
    return SpikePipeline(small_config())


@pytest.fixture(scope="module")
def max_pipeline():
    return SpikePipeline(small_config(potential={"kind": "gaussian_max"}))


def test_xi_grid_for_one_dimensional_E(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    assert sampler.dim_E == 1
    assert sampler.rho == pytest.approx(1.5)
    assert sampler.xi_coords.shape == (21, 1)
    assert sampler.on_rim.sum() == 2
    assert np.allclose(np.abs(sampler.xi_coords[sampler.on_rim, 0]), 1.5)
    assert sampler.xi_coords[10, 0] == 0.0


def test_xi_grid_for_planar_E(max_pipeline):
    sampler = max_pipeline.sampler(0.2)
    assert sampler.dim_E == 2
    norms = np.linalg.norm(sampler.xi_coords, axis=1)
    assert norms.max() == pytest.approx(sampler.rho)
    assert sampler.on_rim.sum() == 16
    assert np.allclose(norms[sampler.on_rim], sampler.rho)


def test_cone_elements_vanish_at_start_and_on_boundary(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    assert np.all(sampler.element_values(0.0, [0.0]) == 0.0)
    values = sampler.element_values(sampler.curve.t_star, [0.0])
    assert values[0, :].max() == 0.0 and values[:, -1].max() == 0.0
    assert values.max() == pytest.approx(sampler.profile.U0, rel=1e-9)


def test_cone_max_ties_go_to_t_star_then_small_xi(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    table = np.zeros((sampler.t_values.size, len(sampler.xi_coords)))
    i_star = int(np.argmin(np.abs(sampler.t_values - sampler.curve.t_star)))
    centre = len(sampler.xi_coords) // 2
    table[-1, 0] = 1.0
    table[i_star, 3] = 1.0
    table[i_star, centre] = 1.0 - 0.5 * TIE_RTOL
    sampler._energies = table
    top = cone_max_energy(sampler.grid, sampler)
    assert top.value == 1.0
    assert top.t == pytest.approx(sampler.t_values[i_star])
    assert top.xi == [0.0]


def test_boundary_gap_on_prepared_table(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    table = np.full((sampler.t_values.size, len(sampler.xi_coords)), 0.5)
    table[:, sampler.on_rim] = 0.8
    table[-1, :] = -1.0
    sampler._energies = table
    report = boundary_gap(sampler.grid, sampler, m=1.0, strict=True)
    assert report.passes
    assert report.delta == pytest.approx(0.2)
    assert report.max_end_energy == -1.0

    table[-1, 4] = 0.1
    report = boundary_gap(sampler.grid, sampler, m=1.0)
    assert not report.end_negative and not report.passes
    with pytest.raises(BoundaryGapError):
        boundary_gap(sampler.grid, sampler, m=1.0, strict=True)


def test_default_t0(planar_curve):
    assert default_t0(planar_curve) == pytest.approx(max(planar_curve.t_star - 0.2, 0.05))
    assert default_t0(planar_curve) < planar_curve.t_star


def test_psi_centred_element_has_zero_barycenter(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    assert np.allclose(psi_map(sampler.grid, sampler, sampler.curve.t_star, [0.0]), 0.0, atol=1e-10)


def test_degree_one_for_saddle(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    report = degree_check(sampler.grid, sampler, sampler.curve.t_star)
    assert report.degree == 1
    assert len(report.trace) == 2
    assert report.trace[0]["psi_0"] < 0.0 < report.trace[1]["psi_0"]


def test_degree_one_for_maximum(max_pipeline):
    sampler = max_pipeline.sampler(0.2)
    report = degree_check(sampler.grid, sampler, sampler.curve.t_star)
    assert report.degree == 1
    assert len(report.trace) == sampler.config.n_circle


def test_degree_sweep_covers_default_range(saddle_pipeline):
    sampler = saddle_pipeline.sampler(0.2)
    reports = degree_sweep(sampler.grid, sampler)
    assert len(reports) == sampler.config.n_degree_t
    assert reports[0].t == pytest.approx(default_t0(sampler.curve))
    assert reports[-1].t == 1.0
    assert all(r.degree == 1 for r in reports)


@pytest.mark.slow
def test_boundary_gap_positive_on_real_cone():
    pipeline = SpikePipeline(small_config(grid={"n": 161, "L_margin": 8.0}))
    sampler = pipeline.sampler(0.2)
    report = boundary_gap(sampler.grid, sampler, pipeline.planar_state().energy)
    assert report.end_negative
    assert report.delta > 0.0


@pytest.mark.slow
def test_constrained_saddle_near_ground_level():
    pipeline = SpikePipeline(small_config(grid={"n": 161, "L_margin": 8.0}))
    outcome = pipeline.run_eps(0.2)
    m = pipeline.planar_state().energy
    saddle = outcome.saddle
    assert saddle.residual < 1e-9
    assert saddle.barycenter_norm < 1e-9
    assert saddle.barycenter_check < 1e-3
    assert outcome.bracket.m_alpha1 <= saddle.energy <= outcome.bracket.upper + 1e-6
    assert saddle.energy == pytest.approx(m, rel=0.1)
    assert outcome.row.status == "ok"
    assert outcome.row.degree == 1
    assert outcome.row.degree_min == outcome.row.degree_max == 1
    assert saddle.min_value >= -1e-10


def _autonomous_grid():
    problem = EpsProblem(
        eps=0.1,
        truncation=TruncationParams(a=0.25, alpha1=0.9),
        potential=PotentialSpec(kind="constant"),
        nonlinearity=NonlinearitySpec(),
        n=129,
        L=16.0,
        margin=1.0,
        e_basis=[[1.0, 0.0]],
    )
    return GridProblem(problem)


def test_autonomous_saddle_has_zero_multiplier(planar_state):
    grid = _autonomous_grid()
    seed = interpolate_radial(planar_state.profile, n=grid.n, L=grid.L)
    saddle = constrained_saddle(grid, seed, tol=1e-9, m=planar_state.energy)
    assert saddle.residual < 1e-9
    assert saddle.lambda_norm < 1e-8
    assert saddle.energy == pytest.approx(planar_state.energy, rel=5e-2)


def test_saddle_line_search_gives_up_on_uphill_steps(monkeypatch, planar_state):
    monkeypatch.setattr("services.minmax.spsolve", lambda K, rhs: -spsolve(K, rhs))
    grid = _autonomous_grid()
    seed = interpolate_radial(planar_state.profile, n=grid.n, L=grid.L, amplitude=1.05, dilation=0.97)
    with pytest.raises(SaddleDivergenceError, match="no merit decrease"):
        constrained_saddle(grid, seed, tol=1e-9)
