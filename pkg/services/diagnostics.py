import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.stats import linregress

from core.exceptions import GeometryMismatchError
from models.results import (
    ConcentrationClass,
    GridField,
    GroundState,
    PowerLawFit,
    SaddleResult,
    SpikeDiagnostics,
    SpikeRun,
    UntruncationReport,
)
from services.grid_solver import ProblemLike, as_grid_problem, h1_norm
from services.nonlinearity import F_eval, Ftilde_eval, chi_grad
from services.potential import grad_v

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-10
MONOTONE_SLACK = 1.25
TABLE_COLUMNS = [
    "eps",
    "status",
    "energy_lower",
    "energy_upper",
    "m",
    "m_grid",
    "energy_error",
    "discretization_error",
    "energy_error_grid",
    "eps_y_norm",
    "h1_distance",
    "lambda_norm",
    "barycenter_norm",
    "delta_gap",
    "degree",
    "degree_min",
    "degree_max",
    "max_outside",
    "untruncation_passes",
]


def spike_center(u: GridField) -> np.ndarray:
    """Grid maximum refined by a three-point parabola along each axis"""
    v = u.values
    i, j = np.unravel_index(int(np.argmax(v)), v.shape)
    if not v[i, j] > 0.0:
        logger.warning("spike_center called on a field without a positive maximum")
    offsets = []
    for axis in range(2):
        idx = [i, j]
        if 0 < idx[axis] < u.n - 1:
            lo = list(idx)
            hi = list(idx)
            lo[axis] -= 1
            hi[axis] += 1
            fm, f0, fp = v[tuple(lo)], v[i, j], v[tuple(hi)]
            curvature = fm - 2.0 * f0 + fp
            offsets.append(0.5 * (fm - fp) / curvature if curvature < 0.0 else 0.0)
        else:
            offsets.append(0.0)
    return np.array([u.axis[i] + offsets[0] * u.h, u.axis[j] + offsets[1] * u.h])


def _profile_on_grid(u: GridField, state: GroundState, y: Sequence[float]) -> np.ndarray:
    axis = u.axis
    X1, X2 = np.meshgrid(axis, axis, indexing='ij')
    values = state.profile.evaluate(np.hypot(X1 - y[0], X2 - y[1]))
    values[0, :] = values[-1, :] = values[:, 0] = values[:, -1] = 0.0
    return values


def distance_to_ground_states(
    u: GridField, state: GroundState, center: Optional[Sequence[float]] = None
) -> Tuple[float, np.ndarray]:
    """
    H1 distance from u to the translates of the ground state

    A 5x5 lattice of translates around the spike centre is scanned first,
    then each coordinate of the best translate is refined by a bounded
    scalar minimization.

    Returns:
        tuple: (distance, translate achieving it)
    """
    def distance(y) -> float:
        return h1_norm(u.with_values(u.values - _profile_on_grid(u, state, y)))

    c = spike_center(u) if center is None else np.asarray(center, dtype=float)
    h = u.h
    lattice = [c + h * np.array([a, b]) for a in range(-2, 3) for b in range(-2, 3)]
    best = min(lattice, key=distance)
    for axis in range(2):
        def along(s, axis=axis):
            y = best.copy()
            y[axis] = s
            return distance(y)

        res = minimize_scalar(along, bounds=(best[axis] - h, best[axis] + h), method='bounded', options={'xatol': 1e-6 * h})
        if res.fun < distance(best):
            best[axis] = res.x
    value = distance(best)
    logger.debug(f"H1 distance to ground-state translates: {value:.6g} at y={best.tolist()}")
    return value, best


def untruncation_check(problem: ProblemLike, result: SaddleResult) -> UntruncationReport:
    """
    Whether u stays below the crossover outside B1 at scale eps

    When it does, g_eps(x, u) = f(u) everywhere and the truncated and plain
    residuals coincide bit for bit.
    """
    grid = as_grid_problem(problem)
    values = grid.check(result.u_eps)
    R1 = grid.problem.truncation.radii[1]
    outside = grid.physical_radius > R1
    masked = np.where(outside, values, -np.inf)
    idx = np.unravel_index(int(np.argmax(masked)), values.shape)
    max_outside = float(masked[idx]) if outside.any() else 0.0
    passes = max_outside < grid.crossover
    identical = bool(np.array_equal(grid.residual(values), grid.plain_residual(values)))
    report = UntruncationReport(
        max_outside=max_outside,
        location=grid.points[idx].tolist(),
        crossover=grid.crossover,
        passes=passes,
        residuals_identical=identical,
    )
    logger.info(
        f"Untruncation eps={grid.eps}: max outside B1 = {max_outside:.4g} vs r = {grid.crossover:.4g}, "
        f"passes={passes}, residuals identical={identical}"
    )
    return report


def _sup_grad_v_on_B2(grid) -> float:
    R2 = grid.problem.truncation.radii[2]
    inside = grid.physical_radius <= R2
    gradients = grad_v(grid.problem.potential, grid.eps * grid.points[inside])
    return float(np.max(np.linalg.norm(gradients, axis=-1))) if gradients.size else 0.0


def local_identity_residual(
    problem: ProblemLike,
    result: SaddleResult,
    center: Sequence[float],
    radius: float,
    direction: Sequence[float],
) -> float:
    """
    Normalized local identity 1/2 dV . int u^2 - dchi . int (F(u) - Ftilde(u))

    Both derivatives are taken along the direction at the physical point
    eps * center; the integrals run over the ball of the given grid radius.
    """
    grid = as_grid_problem(problem)
    values = grid.check(result.u_eps)
    center = np.asarray(center, dtype=float)
    nu = np.asarray(direction, dtype=float)
    nu = nu / np.linalg.norm(nu)
    if np.any(np.abs(center) + radius > grid.L):
        raise GeometryMismatchError(f"ball of radius {radius} at {center.tolist()} exceeds the grid half-width {grid.L}")

    ball = np.hypot(grid.points[..., 0] - center[0], grid.points[..., 1] - center[1]) <= radius
    point = grid.eps * center
    dV = float(grad_v(grid.problem.potential, point) @ nu)
    dchi = float(chi_grad(grid.problem.truncation, point) @ nu)
    spec, a = grid.problem.nonlinearity, grid.problem.truncation.slope
    mass = grid.h ** 2 * float(np.sum(values[ball] ** 2))
    excess = grid.h ** 2 * float(np.sum(F_eval(spec, values[ball]) - Ftilde_eval(spec, a, values[ball], grid.crossover)))
    raw = 0.5 * dV * mass - dchi * excess

    sup_grad = _sup_grad_v_on_B2(grid)
    scale = 0.5 * (sup_grad if sup_grad > 0.0 else 1.0) * mass
    value = abs(raw) / scale if scale > 0.0 else 0.0
    logger.debug(f"Local identity at eps*y={point.tolist()}: dV={dV:.3e}, dchi={dchi:.3e}, residual={value:.3e}")
    return value


def classify_concentration_point(problem: ProblemLike, center: Sequence[float]) -> ConcentrationClass:
    """Geometric case of the physical point eps * center relative to B1 and B2"""
    grid = as_grid_problem(problem)
    R1, R2 = grid.problem.truncation.radii[1:3]
    rho = float(np.linalg.norm(grid.eps * np.asarray(center, dtype=float)))
    band = grid.eps * grid.h
    if abs(rho - R1) <= band:
        case = "boundary_B1"
    elif rho < R1:
        case = "inside_B1"
    elif rho < R2:
        case = "ramp"
    else:
        case = "outside_B2"
    return ConcentrationClass(case=case, radius=rho)


def _decay_rate(u: GridField, center: np.ndarray) -> float:
    """Exponential rate of u along the ray from the spike centre in the +x1 direction"""
    axis = u.axis
    j = int(np.argmin(np.abs(axis - center[1])))
    r = axis - center[0]
    line = u.values[:, j]
    window = (r >= 3.0) & (r <= min(10.0, u.L - center[0] - 1.0)) & (line > 0.0)
    if window.sum() < 3:
        return float('nan')
    slope, _ = np.polyfit(r[window], np.log(line[window] * np.sqrt(r[window])), 1)
    return float(-slope)


def diagnose(problem: ProblemLike, result: SaddleResult, state: GroundState, ball_radius: float = 6.0) -> SpikeDiagnostics:
    """Spike location, H1 distance, decay and the local identity for one saddle"""
    grid = as_grid_problem(problem)
    u = result.u_eps
    y = spike_center(u)
    distance, translate_y = distance_to_ground_states(u, state, y)
    R1 = grid.problem.truncation.radii[1]
    outside = grid.physical_radius > R1
    sup_outside = float(u.values[outside].max()) if outside.any() else 0.0

    eps_y = grid.eps * y
    if np.linalg.norm(eps_y) > 0.0:
        direction = eps_y
    else:
        direction = grid.e_basis[0]
    radius = min(ball_radius, grid.L - float(np.max(np.abs(y))) - grid.h)
    identity = local_identity_residual(grid, result, y, radius, direction)
    diag = SpikeDiagnostics(
        y_eps=y.tolist(),
        eps_y=eps_y.tolist(),
        h1_distance=distance,
        h1_translate=translate_y.tolist(),
        decay_rate=_decay_rate(u, y),
        sup_outside_B1=sup_outside,
        local_identity=identity,
        concentration=classify_concentration_point(grid, y),
    )
    logger.info(
        f"Diagnostics eps={grid.eps}: |eps y|={np.linalg.norm(eps_y):.4g}, H1 distance={distance:.4g}, "
        f"case={diag.concentration.case}"
    )
    return diag


def power_law_fit(eps: Sequence[float], values: Sequence[float], noise_floor: float = NOISE_FLOOR) -> PowerLawFit:
    """
    Least-squares fit of log|value| against log eps

    Values at or below the noise floor are dropped; with fewer than two
    points left the fit is reported at the noise floor with C = 0.
    """
    eps = np.asarray(eps, dtype=float)
    magnitude = np.abs(np.asarray(values, dtype=float))
    keep = magnitude > noise_floor
    if keep.sum() < 2:
        return PowerLawFit(constant=0.0, noise_floor=True, points=int(keep.sum()))
    fit = linregress(np.log(eps[keep]), np.log(magnitude[keep]))
    stderr = float(fit.stderr) if keep.sum() > 2 else None
    return PowerLawFit(
        constant=float(np.exp(fit.intercept)),
        exponent=float(fit.slope),
        exponent_stderr=stderr,
        points=int(keep.sum()),
    )


def lambda_scaling(sweep: Sequence[Tuple[float, SaddleResult]]) -> PowerLawFit:
    """Power law |lambda_eps| ~ C eps^alpha; slopes below 0.5 are flagged"""
    if len(sweep) < 3:
        logger.warning(f"lambda scaling fitted on {len(sweep)} points; at least 3 are expected")
    eps = [e for e, _ in sweep]
    norms = [res.lambda_norm for _, res in sweep]
    fit = power_law_fit(eps, norms)
    if not fit.noise_floor and fit.exponent < 0.5:
        fit.violation = True
        logger.warning(f"lambda_eps slope {fit.exponent:.3f} is below 0.5")
    return fit


def convergence_table(sweep: Sequence[SpikeRun]) -> pd.DataFrame:
    """One row per eps, sorted with eps decreasing"""
    rows = []
    for run in sweep:
        row = run.model_dump()
        if run.energy_lower is not None and run.m is not None:
            row["energy_error"] = abs(run.energy_lower - run.m)
        else:
            row["energy_error"] = None
        if run.m_grid is not None and run.m is not None:
            row["discretization_error"] = abs(run.m_grid - run.m)
        else:
            row["discretization_error"] = None
        if run.energy_lower is not None and run.m_grid is not None:
            row["energy_error_grid"] = abs(run.energy_lower - run.m_grid)
        else:
            row["energy_error_grid"] = None
        rows.append(row)
    table = pd.DataFrame(rows)
    for column in TABLE_COLUMNS:
        if column not in table.columns:
            table[column] = None
    return table[TABLE_COLUMNS].sort_values("eps", ascending=False).reset_index(drop=True)


def monotonicity(
    table: pd.DataFrame,
    columns: Sequence[str] = ("eps_y_norm", "h1_distance", "energy_error"),
    slack: float = MONOTONE_SLACK,
    noise_floor: float = NOISE_FLOOR,
) -> Dict[str, bool]:
    """
    Per column: each value at most slack times the previous one as eps decreases

    Values within the noise floor of each other count as non-increasing, so
    a column that already sits at round-off level does not flip the flag.
    """
    ordered = table.sort_values("eps", ascending=False)
    flags = {}
    for column in columns:
        values = pd.to_numeric(ordered[column], errors='coerce').dropna().to_numpy()
        if values.size < 2:
            flags[column] = True
            continue
        flags[column] = bool(np.all(values[1:] <= slack * values[:-1] + noise_floor))
    return flags


def sweep_checks(table: pd.DataFrame) -> Dict[str, bool]:
    """
    Boundary-gap and degree properties of the rows of a sweep

    Args:
        table: Convergence table, usually restricted to ok rows

    Returns:
        dict: delta_positive, delta_nondecreasing (as eps decreases),
            degree_one (every recorded degree equals 1) and, when the table
            carries the autonomous grid level, bracket_contains_m
    """
    ordered = table.sort_values("eps", ascending=False)
    delta = pd.to_numeric(ordered["delta_gap"], errors='coerce').dropna().to_numpy()
    degrees = np.concatenate([
        pd.to_numeric(ordered[column], errors='coerce').dropna().to_numpy()
        for column in ("degree", "degree_min", "degree_max")
    ])
    checks = {
        "delta_positive": bool(delta.size > 0 and np.all(delta > 0.0)),
        "delta_nondecreasing": bool(np.all(np.diff(delta) >= 0.0)),
        "degree_one": bool(degrees.size > 0 and np.all(degrees == 1)),
    }
    if "m_grid" in ordered and pd.to_numeric(ordered["m_grid"], errors='coerce').notna().any():
        checks["bracket_contains_m"] = _bracket_contains_m(ordered)
    failed = [name for name, passes in checks.items() if not passes]
    if failed:
        logger.warning(f"Sweep checks failing: {failed}")
    return checks


def _bracket_contains_m(ordered: pd.DataFrame) -> bool:
    # m within [lower, upper] widened by twice the grid's own distance to m
    columns = ["energy_lower", "energy_upper", "m", "m_grid"]
    values = ordered[columns].apply(pd.to_numeric, errors='coerce').dropna()
    for lower, upper, m, m_grid in values.itertuples(index=False):
        slack = abs(upper - lower) + 2.0 * abs(m_grid - m)
        if not lower - slack <= m <= upper + slack:
            return False
    return True


def energy_fit(table: pd.DataFrame) -> PowerLawFit:
    """
    Power law of the energy error over the rows that carry it

    Measured against the autonomous level on the same grid when the table
    has it, which removes the discretization offset; against m otherwise.
    """
    column = "energy_error"
    if "energy_error_grid" in table and pd.to_numeric(table["energy_error_grid"], errors='coerce').notna().any():
        column = "energy_error_grid"
    values = pd.to_numeric(table[column], errors='coerce')
    rows = table[values.notna()]
    return power_law_fit(rows["eps"].to_numpy(dtype=float), values[values.notna()].to_numpy(dtype=float))


def table_text(table: pd.DataFrame) -> str:
    """Fixed-width rendering of a convergence table"""
    return table.to_string(index=False, float_format=lambda v: f"{v:.6g}")


def _monotone_columns(table: pd.DataFrame) -> Tuple[str, ...]:
    columns = ("eps_y_norm", "h1_distance", "energy_error")
    if pd.to_numeric(table["energy_error_grid"], errors='coerce').notna().any():
        columns += ("energy_error_grid",)
    return columns


def summarize(sweep: Sequence[SpikeRun]) -> Dict[str, object]:
    """Fits, monotonicity flags and gap/degree checks of a sweep"""
    table = convergence_table(sweep)
    ok = table[table["status"] == "ok"]
    lam = power_law_fit(ok["eps"].to_numpy(), pd.to_numeric(ok["lambda_norm"]).to_numpy()) if len(ok) else None
    if lam is not None and not lam.noise_floor and lam.exponent < 0.5:
        lam.violation = True
    return {
        "rows": len(table),
        "ok_rows": len(ok),
        "lambda_fit": lam.model_dump() if lam is not None else None,
        "energy_fit": energy_fit(ok).model_dump() if len(ok) else None,
        "monotone": monotonicity(ok, _monotone_columns(ok)) if len(ok) else {},
        "checks": sweep_checks(ok) if len(ok) else {},
        "degrees": [int(d) for d in ok["degree"].dropna().tolist()],
    }
