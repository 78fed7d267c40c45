import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.config import settings
from core.exceptions import (
    BoundaryGapError,
    ClassificationError,
    ConfigError,
    SaddleDivergenceError,
    SolverError,
)
from models.results import (
    CriticalPointClass,
    DegreeReport,
    GroundState,
    MPCurve,
    RadiusSelection,
    SpikeOutcome,
    SpikeRun,
)
from models.schemas import PotentialSpec, RunConfig
from services.diagnostics import diagnose, untruncation_check
from services.grid_solver import GridProblem, interpolate_radial, newton_solve
from services.limit_problem import build_mp_curve, solve_ground_state
from services.minmax import (
    ConeSampler,
    boundary_gap,
    cone_max_energy,
    constrained_saddle,
    degree_check,
    degree_sweep,
    estimate_m_eps,
)
from services.potential import classify_critical_point, select_radius_R1

logger = logging.getLogger(__name__)


class SpikePipeline:
    """Chains limit problem, cone geometry, saddle search and diagnostics for one configuration"""

    def __init__(self, config: RunConfig):
        self.config = config
        self._states: Dict[Tuple[float, int], GroundState] = {}
        self._curve: Optional[MPCurve] = None
        self._classification: Optional[CriticalPointClass] = None
        self._e_basis: Optional[np.ndarray] = None
        self._grid_levels: Dict[float, float] = {}

    def ground_state(self, k: float = 1.0, N: Optional[int] = None) -> GroundState:
        """Cached radial ground state of -Delta U + k U = f(U)"""
        lp = self.config.limit_problem
        N = lp.dimension if N is None else N
        key = (float(k), N)
        if key not in self._states:
            self._states[key] = solve_ground_state(
                k, self.config.nonlinearity, N, tol=lp.tol, r_max_scale=lp.r_max_scale, n_points=lp.n_points
            )
        return self._states[key]

    def planar_state(self, k: float = 1.0) -> GroundState:
        return self.ground_state(k, N=2)

    def curve(self) -> MPCurve:
        if self._curve is None:
            mm = self.config.minmax
            self._curve = build_mp_curve(self.planar_state(1.0), 2, n_t=mm.n_t, tau0=mm.tau0, tau1=mm.tau1)
        return self._curve

    def e_basis(self) -> np.ndarray:
        """Basis of E: from the Hessian, or the user's for degenerate points and constant V"""
        if self._e_basis is None:
            potential = self.config.potential
            if potential.kind == "constant":
                if potential.E_basis is None:
                    raise ConfigError("the constant potential needs an explicit E_basis")
                q, _ = np.linalg.qr(np.asarray(potential.E_basis, dtype=float).T)
                self._e_basis = q.T
            else:
                try:
                    self._classification = classify_critical_point(potential)
                except ClassificationError as e:
                    raise ConfigError(e.detail)
                self._e_basis = self._classification.E_basis
        return self._e_basis

    def radius_check(self) -> RadiusSelection:
        """Scan R1 candidates; a failure here only warns"""
        potential = self.config.potential
        self.e_basis()
        report = select_radius_R1(potential, self._classification, potential.radius_candidates, strict=False)
        if report.accepted is None:
            logger.warning(f"No R1 candidate satisfies the level-set condition: {report.rejected}")
        return report

    def grid_problem(self, eps: float) -> GridProblem:
        if self.config.potential.N != 2:
            raise ConfigError("spike runs need a planar potential (N = 2)")
        problem = self.config.problem_for(eps, e_basis=self.e_basis().tolist())
        return GridProblem(problem)

    def sampler(self, eps: float) -> ConeSampler:
        return ConeSampler(self.grid_problem(eps), self.curve(), self.config.minmax)

    def grid_level(self, eps: float) -> Optional[float]:
        """
        Energy of the autonomous ground state solved on the grid of this eps

        The potential is replaced by V = 1 and everything else is kept, so the
        distance to m is the discretization error of the grid. None when the
        Newton solve fails.
        """
        if eps not in self._grid_levels:
            problem = self.grid_problem(eps).problem
            autonomous = GridProblem(problem.model_copy(update={"potential": PotentialSpec(kind="constant")}))
            seed = interpolate_radial(self.planar_state(1.0).profile, n=autonomous.n, L=autonomous.L)
            solver = self.config.solver
            try:
                solution = newton_solve(
                    autonomous,
                    seed,
                    tol=solver.tol,
                    max_iter=solver.max_iter,
                    linear_solver=solver.linear_solver,
                    krylov_tol=solver.krylov_tol,
                    krylov_maxiter=solver.krylov_maxiter,
                )
            except SolverError as e:
                logger.warning(f"Autonomous grid level unavailable at eps={eps}: {e.detail}")
                return None
            self._grid_levels[eps] = autonomous.energy(solution.field.values)
            logger.info(f"Autonomous grid level at eps={eps}: {self._grid_levels[eps]:.8g}")
        return self._grid_levels[eps]

    def degrees(self, eps: float, t_values: Optional[List[float]] = None) -> List[DegreeReport]:
        """Degree of psi_t at each requested t, defaults to the sweep over [t0, 1]"""
        sampler = self.sampler(eps)
        return degree_sweep(sampler.grid, sampler, t_values)

    def run_eps(self, eps: float) -> SpikeOutcome:
        """
        Full pipeline at one eps: cone scan, boundary gap, degrees, saddle, diagnostics

        Raises:
            BoundaryGapError: The boundary margin is not positive
            SaddleDivergenceError: The constrained saddle search failed
        """
        state = self.planar_state(1.0)
        m = state.energy
        m_alpha1 = self.planar_state(self.config.truncation.alpha1).energy
        sampler = self.sampler(eps)
        grid = sampler.grid
        logger.info(f"Spike run eps={eps}: n={grid.n}, L={grid.L:.4g}, dim E={grid.dim_E}")

        top = cone_max_energy(grid, sampler)
        gap = boundary_gap(grid, sampler, m, strict=True)
        degree = degree_check(grid, sampler, self.curve().t_star)
        sweep = degree_sweep(grid, sampler)
        sampled = [degree.degree] + [r.degree for r in sweep]

        seed = sampler.element(top.t, top.xi)
        solver = self.config.solver
        try:
            saddle = constrained_saddle(grid, seed, tol=solver.tol, max_iter=solver.max_iter, m=m, m_lower=m_alpha1)
        except SolverError as e:
            raise SaddleDivergenceError(e.detail)
        bracket = estimate_m_eps(grid, sampler, m, m_alpha1, saddle=saddle)
        diag = diagnose(grid, saddle, state)
        untrunc = untruncation_check(grid, saddle)

        row = SpikeRun(
            eps=eps,
            status="ok",
            energy_lower=bracket.lower,
            energy_upper=bracket.upper,
            m=m,
            m_grid=self.grid_level(eps),
            lambda_norm=saddle.lambda_norm,
            barycenter_norm=saddle.barycenter_norm,
            delta_gap=gap.delta,
            degree=degree.degree,
            degree_min=min(sampled),
            degree_max=max(sampled),
            eps_y_norm=float(np.linalg.norm(diag.eps_y)),
            h1_distance=diag.h1_distance,
            max_outside=untrunc.max_outside,
            untruncation_passes=untrunc.passes,
        )
        return SpikeOutcome(
            row=row,
            cone_max=top,
            gap=gap,
            degree=degree,
            degree_sweep=sweep,
            saddle=saddle,
            bracket=bracket,
            diagnostics=diag,
            untruncation=untrunc,
        )

    def run_eps_row(self, eps: float) -> SpikeOutcome:
        """run_eps with failures folded into the row status"""
        try:
            return self.run_eps(eps)
        except BoundaryGapError as e:
            return SpikeOutcome(row=SpikeRun(eps=eps, status="boundary_gap", detail=e.detail))
        except SaddleDivergenceError as e:
            return SpikeOutcome(row=SpikeRun(eps=eps, status="saddle_divergence", detail=e.detail))
        except SolverError as e:
            return SpikeOutcome(row=SpikeRun(eps=eps, status="solver_error", detail=e.detail))


def _sweep_worker(payload: Tuple[str, float]) -> SpikeOutcome:
    config_json, eps = payload
    pipeline = SpikePipeline(RunConfig.model_validate_json(config_json))
    return pipeline.run_eps_row(eps)


def run_sweep(config: RunConfig, workers: Optional[int] = None) -> List[SpikeOutcome]:
    """
    Run every eps of the sweep, in parallel when more than one worker is allowed

    Args:
        config: Run configuration
        workers: Pool size cap, defaults to SPIKELAB_THREADS

    Returns:
        List[SpikeOutcome]: Outcomes in the order of eps_list
    """
    eps_list = config.sweep.eps_list
    workers = min(workers or settings.SPIKELAB_THREADS, len(eps_list))
    logger.info(f"Sweep over eps={eps_list} with {workers} worker(s)")
    if workers <= 1:
        pipeline = SpikePipeline(config)
        pipeline.radius_check()
        return [pipeline.run_eps_row(eps) for eps in eps_list]

    SpikePipeline(config).radius_check()
    config_json = config.model_dump_json()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(_sweep_worker, [(config_json, eps) for eps in eps_list]))
    for outcome in outcomes:
        logger.info(f"Sweep row eps={outcome.row.eps}: {outcome.row.status}")
    return outcomes
