import inspect
import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, minres, splu, spsolve

from core.exceptions import (
    BarycenterUndefinedError,
    ConvergenceError,
    GeometryMismatchError,
)
from models.results import GridField, NewtonSolution, RadialProfile
from models.schemas import EpsProblem
from services.nonlinearity import TruncatedNonlinearity, f_eval
from services.potential import classify_critical_point, v_eval

logger = logging.getLogger(__name__)

# scipy renamed the minres tolerance keyword
_MINRES_TOL = "rtol" if "rtol" in inspect.signature(minres).parameters else "tol"

# smallest damping factor tried before a line search gives up
MIN_STEP = 1.0 / 1024.0


class GridProblem:
    """
    Discretized truncated problem on the uniform grid of [-L, L]^2

    The unknowns are the interior values; boundary values are held at zero.
    With the edge-sum energy below, the derivative of the energy with respect
    to an interior value is h^2 times the five-point residual.
    """

    def __init__(self, problem: EpsProblem, e_basis: Optional[np.ndarray] = None):
        self.problem = problem
        self.eps = problem.eps
        self.n = problem.n
        self.L = problem.L
        self.h = problem.h
        self.axis = np.linspace(-self.L, self.L, self.n)
        X1, X2 = np.meshgrid(self.axis, self.axis, indexing='ij')
        self.points = np.stack([X1, X2], axis=-1)
        self.radius = np.hypot(X1, X2)
        # |eps x| on the same arithmetic path as the cut-off
        self.physical_radius = np.linalg.norm(self.eps * self.points, axis=-1)

        self.V = v_eval(problem.potential, self.eps * self.points)
        self.nonlinearity = TruncatedNonlinearity(problem.nonlinearity, problem.truncation, self.eps)
        self.crossover = self.nonlinearity.r

        if e_basis is None:
            e_basis = problem.e_basis
        if e_basis is None:
            e_basis = classify_critical_point(problem.potential).E_basis
        self.e_basis = np.atleast_2d(np.asarray(e_basis, dtype=float))
        R3 = problem.truncation.radii[3]
        inside = (self.radius <= R3 / self.eps).astype(float)
        # h_eps(x) = pi_E(x) restricted to B3 at scale eps, one plane per E coordinate
        self.h_eps = np.einsum('ijk,dk->dij', self.points, self.e_basis) * inside

        m = self.n - 2
        T = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
        eye = sp.identity(m)
        self.neg_laplacian = ((sp.kron(T, eye) + sp.kron(eye, T)) / self.h ** 2).tocsr()
        self._preconditioner = None
        logger.debug(f"Grid problem eps={self.eps}: n={self.n}, L={self.L:.4g}, h={self.h:.4g}, r={self.crossover:.6g}")

    @property
    def dim_E(self) -> int:
        return self.e_basis.shape[0]

    def interior(self, values: np.ndarray) -> np.ndarray:
        return values[1:-1, 1:-1].ravel()

    def embed(self, interior: np.ndarray) -> np.ndarray:
        full = np.zeros((self.n, self.n))
        full[1:-1, 1:-1] = interior.reshape(self.n - 2, self.n - 2)
        return full

    def field(self, values: np.ndarray) -> GridField:
        return GridField(n=self.n, L=self.L, values=values)

    def check(self, u: GridField) -> np.ndarray:
        """Values of u after checking it lives on this grid"""
        if u.n != self.n or not np.isclose(u.L, self.L, rtol=1e-12, atol=0.0):
            raise GeometryMismatchError(f"field on (n={u.n}, L={u.L}) used with grid (n={self.n}, L={self.L})")
        return u.values

    def neg_laplacian_full(self, values: np.ndarray) -> np.ndarray:
        """Five-point -Delta_h on interior points, zero on the boundary"""
        out = np.zeros_like(values)
        c = values[1:-1, 1:-1]
        out[1:-1, 1:-1] = (
            4.0 * c - values[:-2, 1:-1] - values[2:, 1:-1] - values[1:-1, :-2] - values[1:-1, 2:]
        ) / self.h ** 2
        return out

    def edge_sum(self, values: np.ndarray) -> float:
        return float(np.sum(np.diff(values, axis=0) ** 2) + np.sum(np.diff(values, axis=1) ** 2))

    def energy(self, values: np.ndarray) -> float:
        """Discrete truncated energy of a grid function"""
        G = self.nonlinearity.G(self.points, values)
        bulk = 0.5 * self.V * values ** 2 - G
        return 0.5 * self.edge_sum(values) + self.h ** 2 * float(np.sum(bulk[1:-1, 1:-1]))

    def residual(self, values: np.ndarray) -> np.ndarray:
        """h^2-scaled gradient of the truncated energy, zero on the boundary"""
        out = self.neg_laplacian_full(values) + self.V * values - self.nonlinearity.g(self.points, values)
        out[0, :] = out[-1, :] = out[:, 0] = out[:, -1] = 0.0
        return out

    def plain_residual(self, values: np.ndarray) -> np.ndarray:
        """Residual with f in place of g_eps"""
        out = self.neg_laplacian_full(values) + self.V * values - np.asarray(f_eval(self.problem.nonlinearity, values))
        out[0, :] = out[-1, :] = out[:, 0] = out[:, -1] = 0.0
        return out

    def jacobian(self, values: np.ndarray, shift: Optional[np.ndarray] = None) -> sp.csr_matrix:
        """-Delta_h + V - d_s g on the interior, minus an optional diagonal shift"""
        diagonal = self.interior(self.V - self.nonlinearity.g_s(self.points, values))
        if shift is not None:
            diagonal = diagonal - self.interior(shift)
        return (self.neg_laplacian + sp.diags(diagonal)).tocsr()

    def preconditioner(self) -> LinearOperator:
        if self._preconditioner is None:
            base = (self.neg_laplacian + sp.diags(self.interior(self.V))).tocsc()
            lu = splu(base)
            size = base.shape[0]
            self._preconditioner = LinearOperator((size, size), matvec=lu.solve, dtype=float)
        return self._preconditioner

    def linear_solve(self, J: sp.spmatrix, rhs: np.ndarray, method: str, tol: float, maxiter: int) -> np.ndarray:
        """
        Solve J x = rhs on the interior

        Args:
            J: Interior Jacobian
            rhs: Right-hand side
            method: "minres" or "direct"
            tol: Krylov tolerance
            maxiter: Krylov iteration cap

        Returns:
            np.ndarray: Interior solution; MINRES failures fall back to spsolve
        """
        if method == "minres":
            x, info = minres(J, rhs, M=self.preconditioner(), maxiter=maxiter, **{_MINRES_TOL: tol})
            if info == 0 and np.all(np.isfinite(x)):
                return x
            logger.warning(f"MINRES returned info={info}; falling back to a direct solve")
        return spsolve(J.tocsc(), rhs)

    def l2_sq(self, values: np.ndarray) -> float:
        return self.h ** 2 * float(np.sum(values ** 2))

    def barycenter(self, values: np.ndarray) -> np.ndarray:
        """Coordinates in E of the h_eps-weighted barycenter"""
        mass = float(np.sum(values ** 2))
        if mass == 0.0:
            raise BarycenterUndefinedError("barycenter of the zero field is undefined")
        return np.einsum('dij,ij->d', self.h_eps, values ** 2) / mass


ProblemLike = Union[EpsProblem, GridProblem]


def as_grid_problem(problem: ProblemLike) -> GridProblem:
    """Discretize an eps-problem unless it already is one"""
    return problem if isinstance(problem, GridProblem) else GridProblem(problem)


def energy(problem: ProblemLike, u: GridField) -> float:
    """Discrete truncated energy: edge-sum Dirichlet term plus trapezoid bulk term"""
    grid = as_grid_problem(problem)
    return grid.energy(grid.check(u))


def gradient(problem: ProblemLike, u: GridField) -> GridField:
    """Residual -Delta_h u + V(eps x) u - g_eps(x, u), zero on the boundary"""
    grid = as_grid_problem(problem)
    return grid.field(grid.residual(grid.check(u)))


def plain_residual(problem: ProblemLike, u: GridField) -> GridField:
    """Residual of the untruncated equation on the same arithmetic path"""
    grid = as_grid_problem(problem)
    return grid.field(grid.plain_residual(grid.check(u)))


def directional_derivative(problem: ProblemLike, u: GridField, direction: GridField) -> float:
    """<dE(u), phi> = h^2 sum R(u) phi"""
    grid = as_grid_problem(problem)
    return grid.h ** 2 * float(np.sum(grid.residual(grid.check(u)) * grid.check(direction)))


def newton_solve(
    problem: ProblemLike,
    seed: GridField,
    tol: float = 1e-9,
    max_iter: int = 50,
    linear_solver: str = "minres",
    krylov_tol: float = 1e-12,
    krylov_maxiter: int = 400,
) -> NewtonSolution:
    """
    Damped Newton iteration for the truncated equation

    Args:
        problem: Eps-problem or its discretization
        seed: Starting field
        tol: Sup-norm residual tolerance
        max_iter: Iteration cap
        linear_solver: "minres" (preconditioned, direct fallback) or "direct"
        krylov_tol: Relative tolerance of the inner solves
        krylov_maxiter: Inner iteration cap

    Returns:
        NewtonSolution: Converged field, iteration count and final residual
    """
    grid = as_grid_problem(problem)
    values = grid.check(seed).copy()
    values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
    R = grid.residual(values)
    norm = float(np.max(np.abs(R)))

    for iteration in range(max_iter + 1):
        logger.debug(f"Newton eps={grid.eps} iteration {iteration}: |R|_inf={norm:.3e}")
        if norm < tol:
            logger.info(f"Newton converged in {iteration} iterations, |R|_inf={norm:.3e}")
            return NewtonSolution(field=grid.field(values), iterations=iteration, residual=norm)
        if iteration == max_iter:
            break
        J = grid.jacobian(values)
        step = grid.embed(grid.linear_solve(J, -grid.interior(R), linear_solver, krylov_tol, krylov_maxiter))

        alpha = 1.0
        l2 = np.sqrt(np.sum(R ** 2))
        while True:
            trial = values + alpha * step
            R_trial = grid.residual(trial)
            if np.sqrt(np.sum(R_trial ** 2)) < (1.0 - 1e-4 * alpha) * l2:
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                logger.error(f"Newton line search stalled at iteration {iteration}, |R|_inf={norm:.3e}")
                raise ConvergenceError(
                    f"no residual decrease along the Newton step down to alpha={MIN_STEP:g} (|R|_inf={norm:.3e})"
                )
        values, R = trial, R_trial
        norm = float(np.max(np.abs(R)))
        if not np.isfinite(norm):
            break

    logger.error(f"Newton failed after {max_iter} iterations, |R|_inf={norm:.3e}")
    raise ConvergenceError(f"Newton did not reach {tol:g} within {max_iter} iterations (|R|_inf={norm:.3e})")


def barycenter(problem: ProblemLike, u: GridField) -> np.ndarray:
    """E-coordinates of int h_eps u^2 / int u^2"""
    grid = as_grid_problem(problem)
    return grid.barycenter(grid.check(u))


def l2_norm(u: GridField) -> float:
    """Trapezoid L2 norm, the boundary being zero"""
    return float(np.sqrt(u.h ** 2 * np.sum(u.values ** 2)))


def h1_norm(u: GridField) -> float:
    """sqrt(||grad u||^2 + ||u||^2) with forward differences and trapezoid weights"""
    v = u.values
    grad_sq = np.sum(np.diff(v, axis=0) ** 2) + np.sum(np.diff(v, axis=1) ** 2)
    return float(np.sqrt(grad_sq + u.h ** 2 * np.sum(v ** 2)))


def translate(u: GridField, y: Sequence[int]) -> GridField:
    """Shift by whole lattice steps with zero fill"""
    shifted = np.zeros_like(u.values)
    di, dj = int(y[0]), int(y[1])
    n = u.n
    src_i = slice(max(0, -di), min(n, n - di))
    dst_i = slice(max(0, di), min(n, n + di))
    src_j = slice(max(0, -dj), min(n, n - dj))
    dst_j = slice(max(0, dj), min(n, n + dj))
    shifted[dst_i, dst_j] = u.values[src_i, src_j]
    return u.with_values(shifted)


def interpolate_radial(
    profile: RadialProfile,
    center: Sequence[float] = (0.0, 0.0),
    n: int = 256,
    L: float = 16.0,
    amplitude: float = 1.0,
    dilation: float = 1.0,
) -> GridField:
    """Grid samples of amplitude * U(|x - center| / dilation), zero beyond r_max and on the boundary"""
    axis = np.linspace(-L, L, n)
    X1, X2 = np.meshgrid(axis, axis, indexing='ij')
    rho = np.hypot(X1 - center[0], X2 - center[1]) / dilation
    values = amplitude * profile.evaluate(rho)
    values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
    return GridField(n=n, L=L, values=values)


def field_slice(u: GridField, axis: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Values along the line through the grid centre parallel to the given axis"""
    mid = u.n // 2
    line = u.values[:, mid] if axis == 0 else u.values[mid, :]
    return u.axis, line
