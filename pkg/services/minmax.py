import logging
import math
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid
from scipy.sparse.linalg import spsolve

from core.exceptions import (
    BoundaryGapError,
    ConvergenceError,
    DegreeUndefinedError,
    SaddleDivergenceError,
    SolverError,
)
from models.results import (
    BoundaryGapReport,
    ConeMax,
    DegreeReport,
    EnergyBracket,
    GridField,
    MPCurve,
    SaddleResult,
)
from models.schemas import MinmaxConfig
from services.grid_solver import MIN_STEP, GridProblem, ProblemLike, as_grid_problem

logger = logging.getLogger(__name__)

# energies this close to the cone max count as ties
TIE_RTOL = 1e-3


class ConeSampler:
    """
    Samples of the cone {gamma_t(. - xi) : t in [0, 1], xi in B0 at scale eps, within E}

    Elements are amplitude * U((x - xi) / dilation) evaluated on the grid of
    the problem; xi is stored in E-coordinates.
    """

    def __init__(self, problem: ProblemLike, curve: MPCurve, config: Optional[MinmaxConfig] = None):
        config = config or MinmaxConfig()
        self.grid = as_grid_problem(problem)
        self.curve = curve
        self.config = config
        self.profile = curve.state.profile
        self.rho = self.grid.problem.truncation.radii[0] / self.grid.eps
        self.t_values = curve.t
        self.xi_coords, self.on_rim = self._xi_grid()
        self._energies: Optional[np.ndarray] = None

    @property
    def dim_E(self) -> int:
        return self.grid.dim_E

    def _xi_grid(self):
        rho = self.rho
        if self.dim_E == 1:
            n = self.config.n_xi
            s = rho * np.linspace(-1.0, 1.0, n)
            if n % 2 == 1:
                # the centre sample must be xi = 0 exactly for the tie-break
                s[n // 2] = 0.0
            coords = s[:, None]
            rim = np.isclose(np.abs(s), rho)
            return coords, rim
        rings = np.linspace(0.0, rho, max((self.config.n_xi + 1) // 2, 2))[1:]
        angles = np.linspace(0.0, 2.0 * math.pi, self.config.n_theta, endpoint=False)
        coords = [np.zeros(2)]
        rim = [False]
        for radius in rings:
            for angle in angles:
                coords.append(radius * np.array([math.cos(angle), math.sin(angle)]))
                rim.append(bool(np.isclose(radius, rho)))
        return np.array(coords), np.array(rim)

    def center(self, coords: Sequence[float]) -> np.ndarray:
        """Grid-plane point of an E-coordinate vector"""
        return np.asarray(coords, dtype=float) @ self.grid.e_basis

    def element_values(self, t: float, coords: Sequence[float]) -> np.ndarray:
        """gamma_t(. - xi) on the grid, zero on the boundary"""
        amplitude, dilation = self.curve.params_at(t)
        if amplitude == 0.0:
            return np.zeros((self.grid.n, self.grid.n))
        c = self.center(coords)
        rho = np.hypot(self.grid.points[..., 0] - c[0], self.grid.points[..., 1] - c[1]) / dilation
        values = amplitude * self.profile.evaluate(rho)
        values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
        return values

    def element(self, t: float, coords: Sequence[float]) -> GridField:
        """Cone element at curve parameter t and E-coordinates coords"""
        return self.grid.field(self.element_values(t, coords))

    def energies(self) -> np.ndarray:
        """Energy table indexed by (t, xi), computed once"""
        if self._energies is None:
            table = np.zeros((self.t_values.size, len(self.xi_coords)))
            for i, t in enumerate(self.t_values):
                for j, coords in enumerate(self.xi_coords):
                    table[i, j] = self.grid.energy(self.element_values(t, coords))
            self._energies = table
            logger.info(
                f"Cone scan eps={self.grid.eps}: {table.size} elements, max energy {table.max():.8g}"
            )
        return self._energies


def cone_max_energy(problem: ProblemLike, sampler: ConeSampler) -> ConeMax:
    """
    Largest sampled energy on the cone with its argmax

    Ties within TIE_RTOL of the max go to the ground-state parameter t_star,
    then to the smallest |xi|.
    """
    table = sampler.energies()
    best = float(table.max())
    tied = np.argwhere(table >= best - TIE_RTOL * abs(best))
    t_star = sampler.curve.t_star
    xi_norms = np.linalg.norm(sampler.xi_coords, axis=1)
    i, j = min(
        (tuple(idx) for idx in tied),
        key=lambda idx: (abs(sampler.t_values[idx[0]] - t_star), xi_norms[idx[1]]),
    )
    result = ConeMax(value=best, t=float(sampler.t_values[i]), xi=sampler.xi_coords[j].tolist())
    logger.info(f"Cone max {best:.8g} at t={result.t:.4f}, xi={result.xi}")
    return result


def boundary_gap(problem: ProblemLike, sampler: ConeSampler, m: float, strict: bool = False) -> BoundaryGapReport:
    """
    Margin between m and the energies on the lateral boundary of the cone

    Args:
        problem: Eps-problem
        sampler: Cone sampler of that problem
        m: Ground-state level at k = 1
        strict: Raise BoundaryGapError when the margin is not positive

    Returns:
        BoundaryGapReport: delta and the two boundary maxima
    """
    table = sampler.energies()
    end = table[-1, :]
    rim = table[:, sampler.on_rim]
    max_end = float(end.max())
    max_rim = float(rim.max())
    delta = m - max(max_end, max_rim)
    end_negative = bool(np.all(end < 0.0))
    report = BoundaryGapReport(
        delta=delta,
        max_end_energy=max_end,
        max_rim_energy=max_rim,
        end_negative=end_negative,
        passes=delta > 0.0 and end_negative,
    )
    logger.info(f"Boundary gap eps={sampler.grid.eps}: delta={delta:.6g}, end max={max_end:.6g}, rim max={max_rim:.6g}")
    if strict and not report.passes:
        logger.error(f"Boundary estimate fails at eps={sampler.grid.eps}")
        raise BoundaryGapError(
            f"boundary gap delta={delta:.6g} (end energies negative: {end_negative}) at eps={sampler.grid.eps}"
        )
    return report


def psi_map(problem: ProblemLike, sampler: ConeSampler, t: float, xi: Sequence[float]) -> np.ndarray:
    """Barycenter of the cone element at (t, xi), in E-coordinates"""
    return sampler.grid.barycenter(sampler.element_values(t, xi))


def _boundary_samples(sampler: ConeSampler) -> np.ndarray:
    if sampler.dim_E == 1:
        return np.array([[-sampler.rho], [sampler.rho]])
    angles = np.linspace(0.0, 2.0 * math.pi, sampler.config.n_circle, endpoint=False)
    return sampler.rho * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def degree_check(problem: ProblemLike, sampler: ConeSampler, t: float) -> DegreeReport:
    """
    Brouwer degree of psi_t on the boundary of B0 at scale eps in E

    dim E = 1 counts the sign change between the two endpoints; dim E = 2
    accumulates the unwrapped angle of psi around the sampled circle.
    """
    samples = _boundary_samples(sampler)
    values = np.array([psi_map(problem, sampler, t, xi) for xi in samples])
    norms = np.linalg.norm(values, axis=1)
    floor = 1e-12 * sampler.rho
    trace = [
        {**{f"xi_{d}": float(x) for d, x in enumerate(xi)}, **{f"psi_{d}": float(v) for d, v in enumerate(psi)}}
        for xi, psi in zip(samples, values)
    ]
    if np.any(norms <= floor):
        bad = samples[int(np.argmin(norms))].tolist()
        logger.error(f"psi vanishes on the boundary at xi={bad}, t={t}")
        raise DegreeUndefinedError(f"psi_t vanishes at boundary sample xi={bad} (t={t}); refine the grid")

    if sampler.dim_E == 1:
        degree = int(round((np.sign(values[1, 0]) - np.sign(values[0, 0])) / 2.0))
    else:
        angles = np.unwrap(np.arctan2(values[:, 1], values[:, 0]))
        closing = np.angle(np.exp(1j * (np.arctan2(values[0, 1], values[0, 0]) - angles[-1])))
        degree = int(round((angles[-1] - angles[0] + closing) / (2.0 * math.pi)))
    logger.info(f"Degree at eps={sampler.grid.eps}, t={t:.4f}: {degree}")
    return DegreeReport(t=float(t), degree=degree, trace=trace)


def default_t0(curve: MPCurve) -> float:
    """Start of the degree range: t_star - 0.2, clamped to 0.05"""
    return max(curve.t_star - 0.2, 0.05)


def degree_sweep(problem: ProblemLike, sampler: ConeSampler, t_values: Optional[Sequence[float]] = None) -> List[DegreeReport]:
    """Degree at every sampled t in [t0, 1]"""
    if t_values is None:
        t0 = sampler.config.t0 if sampler.config.t0 is not None else default_t0(sampler.curve)
        t_values = np.linspace(t0, 1.0, sampler.config.n_degree_t)
    return [degree_check(problem, sampler, float(t)) for t in t_values]


def _independent_barycenter(grid: GridProblem, values: np.ndarray) -> np.ndarray:
    """Barycenter through scipy trapezoid quadrature along both axes"""
    weight = values ** 2
    mass = trapezoid(trapezoid(weight, x=grid.axis, axis=1), x=grid.axis)
    moments = [trapezoid(trapezoid(plane * weight, x=grid.axis, axis=1), x=grid.axis) for plane in grid.h_eps]
    return np.asarray(moments) / mass


def constrained_saddle(
    problem: ProblemLike,
    seed: GridField,
    tol: float = 1e-9,
    max_iter: int = 50,
    m: Optional[float] = None,
    m_lower: Optional[float] = None,
) -> SaddleResult:
    """
    Newton on the bordered system for (u, lambda)

    Solves -Delta u + V(eps x) u - g_eps(x, u) - (lambda . h_eps) u = 0 together
    with a vanishing barycenter. The constraint is imposed through
    c_j(u) = 1/2 sum h_j u^2, whose gradient h_j u borders the Jacobian.

    Args:
        problem: Eps-problem
        seed: Starting field, typically the cone element at the argmax
        tol: Tolerance on the sup norm of the residual and on |barycenter|
        max_iter: Newton iteration cap
        m: Ground-state level; energies below m/4 are rejected
        m_lower: Lower level m_alpha1; energies below it are rejected

    Returns:
        SaddleResult: Converged pair with diagnostics
    """
    grid = as_grid_problem(problem)
    d = grid.dim_E
    values = grid.check(seed).copy()
    values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
    lam = np.zeros(d)

    def residuals(u: np.ndarray, lam: np.ndarray):
        weight = np.einsum('d,dij->ij', lam, grid.h_eps)
        R = grid.residual(u) - weight * u
        c = 0.5 * np.einsum('dij,ij->d', grid.h_eps, u ** 2)
        return R, c, weight

    R, c, weight = residuals(values, lam)
    for iteration in range(max_iter + 1):
        res_norm = float(np.max(np.abs(R)))
        bary = float(np.linalg.norm(grid.barycenter(values)))
        logger.debug(f"Saddle eps={grid.eps} iteration {iteration}: |R|_inf={res_norm:.3e}, |beta|={bary:.3e}")
        if not np.isfinite(res_norm):
            raise SaddleDivergenceError(f"saddle iteration diverged at eps={grid.eps}")
        if res_norm < tol and bary < tol:
            break
        if iteration == max_iter:
            logger.error(f"Saddle search stalled: |R|_inf={res_norm:.3e}, |beta|={bary:.3e}")
            raise SaddleDivergenceError(
                f"constrained saddle did not converge in {max_iter} iterations at eps={grid.eps} "
                f"(|R|_inf={res_norm:.3e}, |beta|={bary:.3e})"
            )

        J = grid.jacobian(values, shift=weight)
        B = sp.csc_matrix(np.stack([grid.interior(plane * values) for plane in grid.h_eps], axis=1))
        K = sp.bmat([[J, -B], [-B.T, None]], format='csc')
        rhs = np.concatenate([-grid.interior(R), c])
        try:
            step = spsolve(K, rhs)
        except (RuntimeError, ValueError) as e:
            raise SaddleDivergenceError(f"bordered system could not be solved: {e}")
        du = grid.embed(step[:-d])
        dlam = step[-d:]

        merit = float(np.sum(R ** 2) + np.sum(c ** 2))
        alpha = 1.0
        while True:
            trial_u, trial_lam = values + alpha * du, lam + alpha * dlam
            R_t, c_t, w_t = residuals(trial_u, trial_lam)
            if float(np.sum(R_t ** 2) + np.sum(c_t ** 2)) < (1.0 - 1e-4 * alpha) * merit:
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                logger.error(f"Saddle line search stalled: |R|_inf={res_norm:.3e}, |beta|={bary:.3e}")
                raise SaddleDivergenceError(
                    f"no merit decrease along the bordered Newton step at eps={grid.eps} "
                    f"(|R|_inf={res_norm:.3e}, |beta|={bary:.3e})"
                )
        values, lam, R, c, weight = trial_u, trial_lam, R_t, c_t, w_t

    field = grid.field(values)
    energy_value = grid.energy(values)
    if m is not None and energy_value < 0.25 * m:
        logger.error(f"Saddle collapsed: energy {energy_value:.6g} below m/4")
        raise SaddleDivergenceError(f"saddle converged to a low-energy field (energy {energy_value:.6g} < m/4)")
    if m_lower is not None and energy_value < m_lower:
        raise SaddleDivergenceError(f"saddle energy {energy_value:.6g} is below the lower level {m_lower:.6g}")

    min_value = float(values.min())
    if min_value < -1e-10:
        logger.warning(f"Saddle field has negative values down to {min_value:.3e}")
    check = float(np.linalg.norm(_independent_barycenter(grid, values)))
    result = SaddleResult(
        u_eps=field,
        lambda_eps=lam.tolist(),
        energy=energy_value,
        residual=res_norm,
        barycenter_norm=bary,
        barycenter_check=check,
        iterations=iteration,
        min_value=min_value,
    )
    logger.info(
        f"Saddle eps={grid.eps}: energy={energy_value:.8g}, |lambda|={result.lambda_norm:.3e}, "
        f"iterations={iteration}"
    )
    return result


def estimate_m_eps(
    problem: ProblemLike,
    sampler: ConeSampler,
    m: float,
    m_alpha1: float,
    tol: float = 1e-9,
    max_iter: int = 50,
    saddle: Optional[SaddleResult] = None,
) -> EnergyBracket:
    """
    Bracket [saddle energy, cone max] for the min-max level

    Args:
        problem: Eps-problem with a positive boundary gap
        sampler: Cone sampler of that problem
        m: Ground-state level at k = 1
        m_alpha1: Ground-state level at k = alpha1
        tol: Saddle tolerance
        max_iter: Saddle iteration cap
        saddle: Reuse an already converged saddle

    Returns:
        EnergyBracket: Lower and upper ends with the reference levels
    """
    top = cone_max_energy(problem, sampler)
    if saddle is None:
        seed = sampler.element(top.t, top.xi)
        try:
            saddle = constrained_saddle(problem, seed, tol=tol, max_iter=max_iter, m=m, m_lower=m_alpha1)
        except (ConvergenceError, SolverError) as e:
            raise SaddleDivergenceError(e.detail)
    bracket = EnergyBracket(lower=saddle.energy, upper=top.value, m=m, m_alpha1=m_alpha1)
    logger.info(f"m_eps bracket at eps={sampler.grid.eps}: [{bracket.lower:.8g}, {bracket.upper:.8g}], m={m:.8g}")
    return bracket
