import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from core.exceptions import ClassificationError, RadiusSelectionError
from models.results import CriticalPointClass, RadiusSelection, V0Report
from models.schemas import PotentialSpec

logger = logging.getLogger(__name__)

SPHERE_RADIUS = 1e-2
SPHERE_SAMPLES = 64


def _terms(spec: PotentialSpec) -> List[Tuple[float, np.ndarray]]:
    """Monomials of P in V = 1 + P(x) exp(-|x|^2)"""
    N = spec.N
    if spec.kind == "constant":
        return []
    if spec.kind == "custom_polynomial_bump":
        return [(t.coefficient, np.asarray(t.powers, dtype=int)) for t in spec.terms]
    squares = [np.eye(N, dtype=int)[i] * 2 for i in range(N)]
    if spec.kind == "gaussian_max":
        return [(-spec.beta, sq) for sq in squares]
    # gaussian_saddle: beta (|x_perp|^2 - x_1^2)
    return [(-spec.beta, squares[0])] + [(spec.beta, sq) for sq in squares[1:]]


def _monomial(x: np.ndarray, powers: np.ndarray) -> np.ndarray:
    out = np.ones(x.shape[:-1])
    for i, p in enumerate(powers):
        if p:
            out = out * x[..., i] ** p
    return out


def _monomial_grad(x: np.ndarray, powers: np.ndarray) -> np.ndarray:
    grads = np.zeros(x.shape)
    for j, p in enumerate(powers):
        if p == 0:
            continue
        lowered = powers.copy()
        lowered[j] -= 1
        grads[..., j] = p * _monomial(x, lowered)
    return grads


def _monomial_hess(x: np.ndarray, powers: np.ndarray) -> np.ndarray:
    N = len(powers)
    hess = np.zeros(x.shape + (N,))
    for i in range(N):
        for j in range(N):
            lowered = powers.copy()
            factor = lowered[i]
            lowered[i] -= 1
            if factor == 0:
                continue
            factor *= lowered[j]
            lowered[j] -= 1
            if factor == 0:
                continue
            hess[..., i, j] = factor * _monomial(x, lowered)
    return hess


def _polynomial(spec: PotentialSpec, x: np.ndarray):
    P = np.zeros(x.shape[:-1])
    dP = np.zeros(x.shape)
    for c, powers in _terms(spec):
        P = P + c * _monomial(x, powers)
        dP = dP + c * _monomial_grad(x, powers)
    return P, dP


def v_eval(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    """V(x) for points stacked along the last axis"""
    x = np.asarray(x, dtype=float)
    P = np.zeros(x.shape[:-1])
    for c, powers in _terms(spec):
        P = P + c * _monomial(x, powers)
    value = 1.0 + P * np.exp(-np.sum(x ** 2, axis=-1))
    return float(value) if value.ndim == 0 else value


def grad_v(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    """Gradient of V at the points x, shape (..., N)"""
    x = np.asarray(x, dtype=float)
    P, dP = _polynomial(spec, x)
    gauss = np.exp(-np.sum(x ** 2, axis=-1))
    return (dP - 2.0 * x * P[..., None]) * gauss[..., None]


def hess_v(spec: PotentialSpec, x: np.ndarray) -> np.ndarray:
    """Exact Hessian of P exp(-|x|^2)"""
    x = np.asarray(x, dtype=float)
    N = x.shape[-1]
    P, dP = _polynomial(spec, x)
    d2P = np.zeros(x.shape + (N,))
    for c, powers in _terms(spec):
        d2P = d2P + c * _monomial_hess(x, powers)
    eye = np.eye(N)
    outer_xdP = x[..., :, None] * dP[..., None, :]
    outer_xx = x[..., :, None] * x[..., None, :]
    H = d2P - 2.0 * eye * P[..., None, None] - 2.0 * outer_xdP - 2.0 * np.swapaxes(outer_xdP, -1, -2)
    H = H + 4.0 * outer_xx * P[..., None, None]
    gauss = np.exp(-np.sum(x ** 2, axis=-1))
    return H * gauss[..., None, None]


def certified_bounds(spec: PotentialSpec) -> Tuple[float, float]:
    """Closed-form bounds for the built-in families, declared bounds otherwise"""
    return spec.alpha1, spec.alpha2


def _sphere_points(basis: np.ndarray, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Points of the sphere of given radius inside span(basis)"""
    dim = basis.shape[0]
    if dim == 1:
        coords = np.array([[1.0], [-1.0]])
    elif dim == 2:
        angles = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        coords = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        coords = np.random.default_rng(seed).normal(size=(count, dim))
        coords = np.vstack([coords, np.eye(dim), -np.eye(dim)])
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    return radius * coords @ basis


def _confirm_split(spec: PotentialSpec, E: np.ndarray) -> bool:
    """V below V(0) on a small sphere of E and above it on a small sphere of E_perp"""
    N = spec.N
    complement = np.linalg.svd(E, full_matrices=True)[2][E.shape[0]:]
    on_E = v_eval(spec, _sphere_points(E, SPHERE_RADIUS, SPHERE_SAMPLES))
    ok = bool(np.all(np.asarray(on_E) < 1.0))
    if complement.shape[0]:
        on_perp = v_eval(spec, _sphere_points(complement, SPHERE_RADIUS, SPHERE_SAMPLES))
        ok = ok and bool(np.all(np.asarray(on_perp) > 1.0))
    logger.debug(f"Sphere sampling at radius {SPHERE_RADIUS} in dimension {N}: split confirmed={ok}")
    return ok


def classify_critical_point(spec: PotentialSpec, tol: float = 1e-8) -> CriticalPointClass:
    """
    Classify the critical point of V at the origin

    Args:
        spec: Potential
        tol: Threshold for zero gradient and zero eigenvalues

    Returns:
        CriticalPointClass: Case tag, basis of E and Hessian eigenvalues
    """
    origin = np.zeros(spec.N)
    gradient = grad_v(spec, origin)
    if np.linalg.norm(gradient) > tol:
        raise ClassificationError(f"origin is not a critical point: grad V(0) = {gradient.tolist()}")

    eigenvalues, vectors = np.linalg.eigh(hess_v(spec, origin))
    if np.all(np.abs(eigenvalues) > tol):
        negative = eigenvalues < 0.0
        if not negative.any():
            raise ClassificationError(f"origin is a local minimum of V (eigenvalues {eigenvalues.tolist()})")
        case = "V1" if negative.all() else "V2"
        E = vectors[:, negative].T
        logger.info(f"Critical point classified as {case}, dim E = {E.shape[0]}")
        return CriticalPointClass(case=case, E_basis=E, hessian_eigenvalues=eigenvalues)

    if spec.E_basis is None:
        raise ClassificationError(
            f"degenerate Hessian (eigenvalues {eigenvalues.tolist()}) needs a user-supplied E_basis"
        )
    q, _ = np.linalg.qr(np.asarray(spec.E_basis, dtype=float).T)
    E = q.T
    if not _confirm_split(spec, E):
        raise ClassificationError("sphere sampling does not confirm a max on E and a min on its complement")
    logger.info(f"Critical point classified as V3, dim E = {E.shape[0]}")
    return CriticalPointClass(case="V3", E_basis=E, hessian_eigenvalues=eigenvalues)


def _tangential_derivative(spec: PotentialSpec, radius: float, theta: np.ndarray) -> np.ndarray:
    points = radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    tangent = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return np.sum(grad_v(spec, points) * tangent, axis=-1)


def select_radius_R1(
    spec: PotentialSpec,
    cls: Optional[CriticalPointClass],
    candidates: Sequence[float],
    tol_level: float = 1e-6,
    tol_tang: float = 1e-4,
    n_angles: int = 4096,
    strict: bool = True,
) -> RadiusSelection:
    """
    First candidate radius whose circle meets the level set {V = 1} transversally

    Args:
        spec: Planar potential
        cls: Classification of the origin, logged alongside the result
        candidates: Radii scanned in order
        tol_level: Half-width of the band |V - 1| < tol_level
        tol_tang: Lower bound on the tangential derivative at level points
        n_angles: Angular samples per circle
        strict: Raise when every candidate is rejected

    Returns:
        RadiusSelection: Accepted radius and near-violating angles per rejected radius
    """
    if spec.N != 2:
        raise RadiusSelectionError("radius selection samples circles and needs N = 2")
    theta = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    report = RadiusSelection()
    case = cls.case if cls is not None else "unclassified"

    for R in candidates:
        points = R * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        level = v_eval(spec, points) - 1.0
        in_band = np.abs(level) < tol_level
        angles = theta[in_band].tolist()

        # sign changes between samples locate level points the band misses
        nxt = np.roll(level, -1)
        crossings = np.nonzero((level * nxt < 0.0) & ~in_band & ~np.roll(in_band, -1))[0]
        for i in crossings:
            a, b = theta[i], theta[i] + 2.0 * math.pi / n_angles
            root = brentq(lambda t: v_eval(spec, R * np.array([math.cos(t), math.sin(t)])) - 1.0, a, b)
            angles.append(float(root))

        report.level_set_size[str(R)] = len(angles)
        if not angles:
            report.accepted = float(R)
            logger.info(f"R1={R} accepted ({case}): circle does not meet V = 1")
            return report
        tangential = np.abs(_tangential_derivative(spec, R, np.asarray(angles)))
        weak = [a for a, d in zip(angles, tangential) if d <= tol_tang]
        if not weak:
            report.accepted = float(R)
            logger.info(f"R1={R} accepted ({case}): {len(angles)} level points, min |dV/dtheta|/R={tangential.min():.3e}")
            return report
        report.rejected[str(R)] = weak[:32]
        logger.debug(f"R1={R} rejected: {len(weak)} level points with small tangential derivative")

    if strict:
        logger.error(f"Every R1 candidate rejected: {list(candidates)}")
        raise RadiusSelectionError(
            f"no candidate radius in {list(candidates)} meets V = 1 transversally; "
            f"near-violating angles: {report.rejected}"
        )
    return report


def check_V0(spec: PotentialSpec, box_halfwidth: float = 4.0, n_samples: int = 40_401) -> V0Report:
    """
    Sample V on a uniform grid of the box and compare with the declared bounds

    Args:
        spec: Potential with alpha1, alpha2
        box_halfwidth: Half-width of the sampled box
        n_samples: Approximate total number of grid samples

    Returns:
        V0Report: Observed range, extremal points and the violating point if any
    """
    per_axis = max(int(round(n_samples ** (1.0 / spec.N))), 3)
    axis = np.linspace(-box_halfwidth, box_halfwidth, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * spec.N), indexing='ij'), axis=-1)
    values = v_eval(spec, mesh)
    flat = values.ravel()
    points = mesh.reshape(-1, spec.N)
    i_min, i_max = int(np.argmin(flat)), int(np.argmax(flat))
    lo, hi = float(flat[i_min]), float(flat[i_max])
    alpha1, alpha2 = certified_bounds(spec)
    slack = 1e-12

    violating = None
    if lo <= 0.0 or lo < alpha1 - slack:
        violating = points[i_min].tolist()
    elif hi > alpha2 + slack:
        violating = points[i_max].tolist()
    passes = violating is None and alpha1 > 0.0

    report = V0Report(
        passes=passes,
        observed_min=lo,
        observed_max=hi,
        alpha1=alpha1,
        alpha2=alpha2,
        argmin=points[i_min].tolist(),
        argmax=points[i_max].tolist(),
        violating_point=violating if violating is not None else (None if passes else points[i_min].tolist()),
    )
    if passes:
        logger.info(f"V0 holds on the box: V in [{lo:.6g}, {hi:.6g}] within [{alpha1:.6g}, {alpha2:.6g}]")
    else:
        logger.warning(f"V0 violated: observed [{lo:.6g}, {hi:.6g}], declared [{alpha1:.6g}, {alpha2:.6g}] at {violating}")
    return report
