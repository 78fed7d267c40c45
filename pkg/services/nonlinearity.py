import logging
from typing import List, Optional, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from core.exceptions import BracketError, ConfigError, HypothesisViolation
from models.results import CheckResult
from models.schemas import NonlinearitySpec, TruncationParams

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# log grid used by every sampled hypothesis check
SAMPLE_GRID = np.logspace(-6.0, 3.0, 10_000)


def _out(value: np.ndarray, like) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


def _powers(spec: NonlinearitySpec):
    return np.asarray(spec.coefficients, dtype=float), np.asarray(spec.exponents, dtype=float)


def f_eval(spec: NonlinearitySpec, s: ArrayLike) -> ArrayLike:
    """f(s) = sum c_i s^q_i for s >= 0, extended by zero"""
    sp = np.maximum(np.asarray(s, dtype=float), 0.0)
    coeffs, exps = _powers(spec)
    total = np.zeros_like(sp)
    for c, q in zip(coeffs, exps):
        total = total + c * sp ** q
    return _out(total, s)


def F_eval(spec: NonlinearitySpec, s: ArrayLike) -> ArrayLike:
    """Antiderivative of f with F(0) = 0"""
    sp = np.maximum(np.asarray(s, dtype=float), 0.0)
    coeffs, exps = _powers(spec)
    total = np.zeros_like(sp)
    for c, q in zip(coeffs, exps):
        total = total + c / (q + 1.0) * sp ** (q + 1.0)
    return _out(total, s)


def fprime_eval(spec: NonlinearitySpec, s: ArrayLike) -> ArrayLike:
    """
    One-sided derivative of f, zero for s < 0

    Args:
        spec: Nonlinearity
        s: Scalar or array of arguments

    Returns:
        Same shape as s
    """
    sp = np.maximum(np.asarray(s, dtype=float), 0.0)
    coeffs, exps = _powers(spec)
    total = np.zeros_like(sp)
    for c, q in zip(coeffs, exps):
        total = total + c * q * sp ** (q - 1.0)
    return _out(total, s)


def crossover_threshold(spec: NonlinearitySpec, a: float) -> float:
    """
    Largest r with min{f(s), a s} = f(s) on (0, r)

    Args:
        spec: Nonlinearity
        a: Truncation slope

    Returns:
        float: Crossover threshold r
    """
    if a <= 0.0:
        raise ConfigError(f"truncation slope a={a} must be positive")
    coeffs, exps = _powers(spec)
    if len(exps) == 1:
        return float((a / coeffs[0]) ** (1.0 / (exps[0] - 1.0)))

    # f(s)/s is strictly increasing from 0 to infinity for the power family
    def excess(s: float) -> float:
        return float(np.sum(coeffs * s ** (exps - 1.0))) - a

    hi = 1.0
    for _ in range(200):
        if excess(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise BracketError(f"no crossover of f(s) and a*s found for a={a}")
    return float(brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def ftilde_eval(spec: NonlinearitySpec, a: float, s: ArrayLike, r: Optional[float] = None) -> ArrayLike:
    """Truncation min{f(s), a s} for s >= 0, zero for s < 0"""
    r = crossover_threshold(spec, a) if r is None else r
    sa = np.asarray(s, dtype=float)
    sp = np.maximum(sa, 0.0)
    value = np.where(sp <= r, f_eval(spec, sp), a * sp)
    return _out(value, s)


def Ftilde_eval(spec: NonlinearitySpec, a: float, s: ArrayLike, r: Optional[float] = None) -> ArrayLike:
    """
    Antiderivative of the truncation min{f(s), a s}

    Below the crossover it is F itself; above it F(r) + a (s^2 - r^2) / 2.

    Args:
        spec: Nonlinearity
        a: Truncation slope
        s: Scalar or array of arguments
        r: Crossover threshold, computed from a when omitted

    Returns:
        Same shape as s
    """
    r = crossover_threshold(spec, a) if r is None else r
    sp = np.maximum(np.asarray(s, dtype=float), 0.0)
    linear_part = F_eval(spec, r) + 0.5 * a * (sp ** 2 - r ** 2)
    value = np.where(sp <= r, F_eval(spec, sp), linear_part)
    return _out(value, s)


def ftilde_prime_eval(spec: NonlinearitySpec, a: float, s: ArrayLike, r: Optional[float] = None) -> ArrayLike:
    """One-sided derivative of the truncation, taken from the active branch"""
    r = crossover_threshold(spec, a) if r is None else r
    sa = np.asarray(s, dtype=float)
    sp = np.maximum(sa, 0.0)
    value = np.where(sa < 0.0, 0.0, np.where(sp <= r, fprime_eval(spec, sp), a))
    return _out(value, s)


def _radius(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def chi_eval(params: TruncationParams, x: np.ndarray) -> ArrayLike:
    """Cut-off: 1 on B1, linear ramp on B2 minus B1, 0 outside B2"""
    R1, R2 = params.radii[1], params.radii[2]
    rho = _radius(x)
    value = np.clip((R2 - rho) / (R2 - R1), 0.0, 1.0)
    return _out(value, rho)


def chi_grad(params: TruncationParams, x: np.ndarray) -> np.ndarray:
    """Almost-everywhere gradient of the cut-off"""
    R1, R2 = params.radii[1], params.radii[2]
    x = np.asarray(x, dtype=float)
    rho = _radius(x)
    on_ramp = (rho > R1) & (rho < R2)
    safe = np.where(rho > 0.0, rho, 1.0)
    scale = np.where(on_ramp, -1.0 / (safe * (R2 - R1)), 0.0)
    return x * scale[..., None]


def g_eval(
    spec: NonlinearitySpec,
    params: TruncationParams,
    x: np.ndarray,
    s: ArrayLike,
    r: Optional[float] = None,
) -> ArrayLike:
    """
    Composite nonlinearity chi(x) f(s) + (1 - chi(x)) ftilde(s)

    Where s < r or chi = 1 the value is f(s) itself, on the same arithmetic
    path as f_eval.
    """
    r = crossover_threshold(spec, params.slope) if r is None else r
    sa = np.asarray(s, dtype=float)
    chi = np.asarray(chi_eval(params, x))
    f = np.asarray(f_eval(spec, sa))
    ft = np.asarray(ftilde_eval(spec, params.slope, sa, r))
    value = np.where((sa < r) | (chi == 1.0), f, chi * f + (1.0 - chi) * ft)
    return _out(value, value)


def G_eval(
    spec: NonlinearitySpec,
    params: TruncationParams,
    x: np.ndarray,
    s: ArrayLike,
    r: Optional[float] = None,
) -> ArrayLike:
    """
    Primitive chi(x) F(s) + (1 - chi(x)) Ftilde(s) of the composite nonlinearity

    Args:
        spec: Nonlinearity
        params: Truncation parameters
        x: Physical points, last axis is the coordinate
        s: Values, broadcast against x
        r: Crossover threshold, computed from the slope when omitted

    Returns:
        ArrayLike: G(x, s)
    """
    r = crossover_threshold(spec, params.slope) if r is None else r
    sa = np.asarray(s, dtype=float)
    chi = np.asarray(chi_eval(params, x))
    F = np.asarray(F_eval(spec, sa))
    Ft = np.asarray(Ftilde_eval(spec, params.slope, sa, r))
    value = np.where((sa < r) | (chi == 1.0), F, chi * F + (1.0 - chi) * Ft)
    return _out(value, value)


def g_s_eval(
    spec: NonlinearitySpec,
    params: TruncationParams,
    x: np.ndarray,
    s: ArrayLike,
    r: Optional[float] = None,
) -> ArrayLike:
    """Partial derivative of g in s"""
    r = crossover_threshold(spec, params.slope) if r is None else r
    sa = np.asarray(s, dtype=float)
    chi = np.asarray(chi_eval(params, x))
    fp = np.asarray(fprime_eval(spec, sa))
    ftp = np.asarray(ftilde_prime_eval(spec, params.slope, sa, r))
    value = np.where((sa < r) | (chi == 1.0), fp, chi * fp + (1.0 - chi) * ftp)
    return _out(value, value)


def g_eps_eval(spec, params, eps: float, x: np.ndarray, s: ArrayLike, r: Optional[float] = None) -> ArrayLike:
    """g_eps(x, s) = g(eps x, s)"""
    return g_eval(spec, params, eps * np.asarray(x, dtype=float), s, r)


def G_eps_eval(spec, params, eps: float, x: np.ndarray, s: ArrayLike, r: Optional[float] = None) -> ArrayLike:
    """G_eps(x, s) = G(eps x, s)"""
    return G_eval(spec, params, eps * np.asarray(x, dtype=float), s, r)


def growth_bound_check(spec: NonlinearitySpec, delta: float) -> float:
    """
    Constant C with |f(s)| <= delta |s| + C |s|^p on the sample grid

    Args:
        spec: Nonlinearity with witness exponent p
        delta: Linear allowance, positive

    Returns:
        float: Validated constant C_delta
    """
    if delta <= 0.0:
        raise ConfigError(f"delta={delta} must be positive")
    p = spec.p
    s = SAMPLE_GRID
    ratio = (f_eval(spec, s) - delta * s) / s ** p
    best = int(np.argmax(ratio))
    C = max(float(ratio[best]), 0.0)

    # polish the grid maximum in log s
    lo = np.log(s[max(best - 1, 0)])
    hi = np.log(s[min(best + 1, s.size - 1)])
    if hi > lo:
        res = minimize_scalar(
            lambda t: -(f_eval(spec, np.exp(t)) - delta * np.exp(t)) / np.exp(t) ** p,
            bounds=(lo, hi),
            method='bounded',
            options={'xatol': 1e-12},
        )
        C = max(C, float(-res.fun))

    midpoints = np.sqrt(s[1:] * s[:-1])
    for sample in (s, midpoints):
        bound = delta * sample + C * sample ** p
        excess = f_eval(spec, sample) - bound
        slack = 1e-9 * np.maximum(bound, 1.0)
        bad = np.nonzero(excess > slack)[0]
        if bad.size:
            s_bad = float(sample[bad[0]])
            logger.error(f"Growth bound violated at s={s_bad:.6g} for delta={delta}")
            raise HypothesisViolation(f"growth bound with C={C:.6g} fails at s={s_bad:.6g}")
    logger.debug(f"Growth bound delta={delta} p={p}: C={C:.8g}")
    return C


def check_hypotheses(spec: NonlinearitySpec, dimension: int) -> List[CheckResult]:
    """Sampled checks of the structural hypotheses on f"""
    s = SAMPLE_GRID
    results = []

    f0_ok = f_eval(spec, 0.0) == 0.0 and fprime_eval(spec, 0.0) == 0.0 and f_eval(spec, -1.0) == 0.0
    results.append(CheckResult(name="f0_regularity", passes=bool(f0_ok), detail="f(0) = f'(0) = 0, f = 0 on s < 0"))

    samples = np.array([1e-2, 1e-4, 1e-6])
    ratios = f_eval(spec, samples) / samples
    f1_ok = bool(np.all(np.diff(ratios) < 0.0))
    results.append(
        CheckResult(
            name="f1_superlinear",
            passes=f1_ok,
            detail=f"f(s)/s at s=1e-2,1e-4,1e-6: {ratios.tolist()}",
            value=float(ratios[-1]),
        )
    )

    f2_ok = spec.is_subcritical(dimension)
    bound = "none" if dimension <= 2 else f"{(dimension + 2) / (dimension - 2):.6g}"
    results.append(
        CheckResult(name="f2_subcritical", passes=f2_ok, detail=f"p={spec.p}, exponents={spec.exponents}, bound={bound}")
    )

    muF = spec.mu * F_eval(spec, s)
    sf = s * f_eval(spec, s)
    worst = float(np.max(muF / sf))
    f3_ok = bool(np.all(muF > 0.0) and np.all(muF <= sf * (1.0 + 1e-12)))
    strict = worst < 1.0 - 1e-12
    results.append(
        CheckResult(
            name="f3_ambrosetti_rabinowitz",
            passes=f3_ok,
            detail=f"max mu F / (s f) = {worst:.12g}, strict={strict}",
            value=worst,
        )
    )
    return results


def truncation_suite(
    spec: NonlinearitySpec,
    params: TruncationParams,
    n_samples: int = 10_000,
    seed: int = 0,
    delta: float = 0.1,
) -> List[CheckResult]:
    """
    Sampled checks of the truncation properties

    Args:
        spec: Nonlinearity
        params: Truncation parameters with resolved slope
        n_samples: Random samples per check
        seed: Seed of the sampling generator
        delta: Linear allowance of the growth check

    Returns:
        List[CheckResult]: One entry per property
    """
    rng = np.random.default_rng(seed)
    a = params.slope
    r = crossover_threshold(spec, a)
    R1, R2, R4 = params.radii[1], params.radii[2], params.radii[4]
    s = rng.uniform(-1.0, 5.0 * max(r, 1.0), n_samples)
    x = rng.uniform(-1.5 * R4, 1.5 * R4, (n_samples, 2))
    results = []

    f = f_eval(spec, s)
    ft = ftilde_eval(spec, a, s, r)
    F = F_eval(spec, s)
    Ft = Ftilde_eval(spec, a, s, r)
    sp = np.maximum(s, 0.0)
    tol = 1e-12

    ok = bool(np.all(ft <= f + tol) and np.all(ft <= a * sp + tol))
    results.append(CheckResult(name="ftilde_below_f_and_as", passes=ok))

    cap = np.minimum(0.5 * a * sp ** 2, F)
    excess = Ft - cap
    ok = bool(np.all(excess <= tol * np.maximum(1.0, cap)))
    results.append(
        CheckResult(name="Ftilde_bound", passes=ok, detail=f"max excess {excess.max():.3e}", value=float(excess.max()))
    )

    inside = rng.uniform(0.0, r, n_samples)
    ok = bool(np.all(ftilde_eval(spec, a, inside, r) == f_eval(spec, inside)))
    detail = f"r={r:.12g}"
    if spec.kind == "pure_power":
        closed = (a / spec.coefficients[0]) ** (1.0 / (spec.exponents[0] - 1.0))
        ok = ok and r == closed
        detail += f", closed form {closed:.12g}"
    results.append(CheckResult(name="crossover", passes=ok, detail=detail, value=r))

    G = G_eval(spec, params, x, s, r)
    ok = bool(np.all(G <= F + tol * np.maximum(1.0, np.abs(F))))
    results.append(CheckResult(name="G_below_F", passes=ok))

    g = g_eval(spec, params, x, s, r)
    in_B1 = _radius(x) <= R1
    small = s < r
    mask = in_B1 | small
    ok = bool(np.all(g[mask] == f[mask]))
    results.append(
        CheckResult(name="g_equals_f", passes=ok, detail=f"{int(mask.sum())} samples in B1 or below r")
    )

    C = growth_bound_check(spec, delta)
    bound = delta * np.abs(s) + C * np.abs(s) ** spec.p
    slack = 1e-9 * np.maximum(bound, 1.0)
    ok = bool(
        np.all(np.abs(f) <= bound + slack) and np.all(np.abs(ft) <= bound + slack) and np.all(np.abs(g) <= bound + slack)
    )
    results.append(CheckResult(name="growth_bound", passes=ok, detail=f"delta={delta}, C={C:.8g}", value=C))

    # difference quotients of chi across random pairs
    y = x + rng.normal(scale=0.05 * (R2 - R1), size=x.shape)
    dist = np.linalg.norm(x - y, axis=1)
    quotients = np.abs(chi_eval(params, x) - chi_eval(params, y)) / np.where(dist > 0.0, dist, 1.0)
    lipschitz = 1.0 / (R2 - R1)
    ok = bool(np.all(quotients <= lipschitz * (1.0 + 1e-9)))
    results.append(
        CheckResult(
            name="chi_lipschitz",
            passes=ok,
            detail=f"max quotient {quotients.max():.6g}, bound {lipschitz:.6g}",
            value=float(quotients.max()),
        )
    )

    radii = np.linspace(0.0, 1.2 * R2, 64)
    points = np.stack([radii, np.zeros_like(radii)], axis=1)
    ok = True
    for level in np.linspace(0.0, 5.0 * max(r, 1.0), 16):
        values = g_eval(spec, params, points, np.full(radii.shape, level), r)
        ok = ok and bool(np.all(np.diff(values) <= tol))
    results.append(CheckResult(name="g_monotone_in_radius", passes=ok))

    failed = [res.name for res in results if not res.passes]
    if failed:
        logger.warning(f"Truncation checks failed: {failed}")
    else:
        logger.info(f"Truncation suite passed ({len(results)} checks, r={r:.6g})")
    return results


class TruncatedNonlinearity:
    """Composite nonlinearity of one eps-problem, with the crossover cached"""

    def __init__(self, spec: NonlinearitySpec, params: TruncationParams, eps: float):
        self.spec = spec
        self.params = params
        self.eps = eps
        self.r = crossover_threshold(spec, params.slope)

    def chi(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(chi_eval(self.params, self.eps * x))

    def g(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """g_eps at grid points x"""
        return np.asarray(g_eps_eval(self.spec, self.params, self.eps, x, s, self.r))

    def G(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        """G_eps at grid points x"""
        return np.asarray(G_eps_eval(self.spec, self.params, self.eps, x, s, self.r))

    def g_s(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        return np.asarray(g_s_eval(self.spec, self.params, self.eps * np.asarray(x, dtype=float), s, self.r))
