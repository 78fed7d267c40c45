import logging
import math
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd
from scipy.integrate import simpson, solve_ivp
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn
from scipy.special import kve

from core.exceptions import BracketError, ConvergenceError
from models.results import GroundState, MPCurve, RadialProfile
from models.schemas import NonlinearitySpec
from services.nonlinearity import F_eval, crossover_threshold, f_eval

logger = logging.getLogger(__name__)

# e-folds between the end of reliable shooting and the terminating event
TAIL_EFOLDS = 7.0
MAX_BISECTIONS = 200


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere in R^N"""
    return 2.0 * math.pi ** (dimension / 2.0) / gamma_fn(dimension / 2.0)


def _shoot(U0: float, k: float, spec: NonlinearitySpec, dimension: int, r_end: float, tol: float, dense: bool = False):
    """
    Integrate the radial equation from a series start at small r

    Returns:
        tuple: (outcome, event radius, solve_ivp result); outcome is
        "overshoot" when U crosses zero and "undershoot" when U' turns positive
    """
    r0 = 1e-4 / math.sqrt(k)
    curvature = (k * U0 - f_eval(spec, U0)) / dimension
    y0 = [U0 + 0.5 * curvature * r0 ** 2, curvature * r0]

    def rhs(r, y):
        U, dU = y
        return [dU, -(dimension - 1) / r * dU + k * U - f_eval(spec, U)]

    def crosses_zero(r, y):
        return y[0]

    def turns_up(r, y):
        return y[1]

    crosses_zero.terminal = True
    crosses_zero.direction = -1
    turns_up.terminal = True
    turns_up.direction = 1

    sol = solve_ivp(
        rhs,
        (r0, r_end),
        y0,
        method='DOP853',
        events=(crosses_zero, turns_up),
        rtol=tol,
        atol=tol * 1e-4 * U0,
        dense_output=dense,
    )
    if sol.t_events[0].size:
        return "overshoot", float(sol.t_events[0][0]), sol
    if sol.t_events[1].size:
        return "undershoot", float(sol.t_events[1][0]), sol
    return "undecided", float(sol.t[-1]), sol


def _bessel_tail(r: np.ndarray, r_split: float, U_split: float, k: float, dimension: int):
    """Decaying solution r^-nu K_nu(sqrt(k) r) of the linearized equation, matched at r_split"""
    nu = (dimension - 2) / 2.0
    root_k = math.sqrt(k)
    base = r_split ** (-nu) * kve(nu, root_k * r_split)
    shape = r ** (-nu) * kve(nu, root_k * r) * np.exp(-root_k * (r - r_split))
    slope = -root_k * r ** (-nu) * kve(nu + 1.0, root_k * r) * np.exp(-root_k * (r - r_split))
    return U_split * shape / base, U_split * slope / base


def radial_integral(profile: RadialProfile, integrand: np.ndarray) -> float:
    """Integral over R^N of a radial quantity sampled on the profile grid"""
    weight = sphere_area(profile.dimension) * profile.r ** (profile.dimension - 1)
    return float(simpson(integrand * weight, x=profile.r))


def state_from_profile(profile: RadialProfile, spec: NonlinearitySpec, shooting_iterations: int = 0) -> GroundState:
    """Attach the energy integrals to a radial profile"""
    U = profile.values
    grad = radial_integral(profile, profile.derivatives ** 2)
    l2 = radial_integral(profile, U ** 2)
    F_int = radial_integral(profile, F_eval(spec, U))
    fU = radial_integral(profile, f_eval(spec, U) * U)
    return GroundState(
        profile=profile,
        nonlinearity=spec,
        energy=0.5 * grad + (0.5 * profile.k * l2 - F_int),
        grad_norm_sq=grad,
        l2_norm_sq=l2,
        F_integral=F_int,
        fU_integral=fU,
        decay_rate=_fit_decay_rate(profile),
        shooting_iterations=shooting_iterations,
    )


def _fit_decay_rate(profile: RadialProfile) -> float:
    r = profile.r
    window = (r >= 0.5 * profile.r_max) & (r <= 0.9 * profile.r_max) & (profile.values > 0.0)
    if window.sum() < 2:
        return float('nan')
    scaled = np.log(profile.values[window] * r[window] ** ((profile.dimension - 1) / 2.0))
    slope, _ = np.polyfit(r[window], scaled, 1)
    return float(-slope)


def solve_ground_state(
    k: float,
    spec: NonlinearitySpec,
    N: int = 2,
    tol: float = 1e-11,
    r_max_scale: float = 20.0,
    n_points: int = 4096,
) -> GroundState:
    """
    Positive radial ground state of -U'' - (N-1)/r U' + k U = f(U)

    Args:
        k: Linear coefficient, positive
        spec: Nonlinearity, subcritical in dimension N
        N: Space dimension
        tol: Relative tolerance of the integrator
        r_max_scale: Profile extent in units of 1/sqrt(k)
        n_points: Points of the uniform radial grid

    Returns:
        GroundState: Profile, energy and integrals
    """
    if k <= 0.0:
        raise BracketError(f"k={k} must be positive")
    if not spec.is_subcritical(N):
        raise BracketError(f"nonlinearity is not subcritical in dimension {N}")

    r_max = r_max_scale / math.sqrt(k)
    r_end = 2.0 * r_max
    # below s_star the trajectory never leaves the positive well
    s_star = crossover_threshold(spec, k)
    lo = s_star
    hi = 2.0 * s_star
    for _ in range(60):
        outcome, _, _ = _shoot(hi, k, spec, N, r_end, tol)
        if outcome == "overshoot":
            break
        lo, hi = hi, 2.0 * hi
    else:
        logger.error(f"No overshooting amplitude found for k={k}")
        raise BracketError(f"shooting bracket not found for k={k}, N={N}")

    iterations = 0
    while hi - lo > 4.0 * np.finfo(float).eps * hi:
        if iterations >= MAX_BISECTIONS:
            raise ConvergenceError(f"shooting bisection did not converge for k={k}")
        mid = 0.5 * (lo + hi)
        outcome, _, _ = _shoot(mid, k, spec, N, r_end, tol)
        if outcome == "overshoot":
            hi = mid
        else:
            lo = mid
        iterations += 1

    outcome, r_event, sol = _shoot(lo, k, spec, N, r_end, tol, dense=True)
    logger.debug(f"Shooting k={k}: U0={lo:.15g}, {outcome} at r={r_event:.4g} after {iterations} bisections")

    r = np.linspace(0.0, r_max, n_points)
    r0 = sol.t[0]
    r_split = min(r_event - TAIL_EFOLDS / math.sqrt(k), float(sol.t[-1]))
    values = np.empty_like(r)
    derivatives = np.empty_like(r)

    head = r < r0
    curvature = (k * lo - f_eval(spec, lo)) / N
    values[head] = lo + 0.5 * curvature * r[head] ** 2
    derivatives[head] = curvature * r[head]

    body = (~head) & (r <= r_split)
    values[body], derivatives[body] = sol.sol(r[body])

    tail = r > r_split
    if tail.any():
        U_split = float(sol.sol(r_split)[0])
        values[tail], derivatives[tail] = _bessel_tail(r[tail], r_split, U_split, k, N)

    profile = RadialProfile(r=r, values=values, derivatives=derivatives, k=k, dimension=N)
    state = state_from_profile(profile, spec, shooting_iterations=iterations)
    logger.info(
        f"Ground state k={k}, N={N}: U0={state.profile.U0:.10g}, m_k={state.energy:.10g}, "
        f"pohozaev={pohozaev_residual(state):.2e}, nehari={nehari_residual(state):.2e}"
    )
    return state


def energy_phi(k: float, state_or_field: Union[GroundState, RadialProfile], spec: Optional[NonlinearitySpec] = None) -> float:
    """Phi_k(u) = 1/2 ||grad u||^2 + k/2 ||u||^2 - int F(u) for a radial field"""
    if isinstance(state_or_field, GroundState):
        profile = state_or_field.profile
        spec = spec or state_or_field.nonlinearity
    else:
        profile = state_or_field
    if spec is None:
        raise ValueError("a nonlinearity is required to evaluate a bare profile")
    U = profile.values
    grad = radial_integral(profile, profile.derivatives ** 2)
    l2 = radial_integral(profile, U ** 2)
    F_int = radial_integral(profile, F_eval(spec, U))
    return 0.5 * grad + (0.5 * k * l2 - F_int)


def pohozaev_residual(state: GroundState) -> float:
    """
    Relative defect of the Pohozaev identity

    (N - 2)/2 ||grad U||^2 + N k/2 ||U||^2 - N int F(U) = 0 for decaying solutions.

    Args:
        state: Ground state with its integrals

    Returns:
        float: |identity| divided by N k/2 ||U||^2
    """
    N, k = state.dimension, state.k
    scale = 0.5 * k * N * state.l2_norm_sq
    identity = 0.5 * (N - 2) * state.grad_norm_sq + scale - N * state.F_integral
    return abs(identity) / scale


def nehari_residual(state: GroundState) -> float:
    """Relative defect of ||grad U||^2 + k ||U||^2 = int f(U) U"""
    quadratic = state.grad_norm_sq + state.k * state.l2_norm_sq
    return abs(quadratic - state.fU_integral) / quadratic


def scaled_energy(state: GroundState, amplitude: float, dilation: float, k: Optional[float] = None) -> float:
    """Phi_k(s U(./tau)) from the scaling of the three integrals"""
    k = state.k if k is None else k
    N = state.dimension
    if amplitude == 0.0:
        return 0.0
    F_int = state.F_integral if amplitude == 1.0 else radial_integral(
        state.profile, F_eval(state.nonlinearity, amplitude * state.profile.values)
    )
    kinetic = 0.5 * amplitude ** 2 * dilation ** (N - 2) * state.grad_norm_sq
    return kinetic + dilation ** N * (0.5 * k * amplitude ** 2 * state.l2_norm_sq - F_int)


def _root_beyond(func, start: float, what: str) -> float:
    hi = 2.0 * start
    for _ in range(60):
        if func(hi) < 0.0:
            return float(brentq(func, start, hi, xtol=1e-12))
        hi *= 2.0
    raise BracketError(f"curve parameter search failed for {what}")


def build_mp_curve(
    state: GroundState,
    N: Optional[int] = None,
    n_t: int = 41,
    tau0: float = 0.5,
    tau1: float = 1.25,
    overshoot: float = 1.05,
) -> MPCurve:
    """
    Admissible mountain-pass path through the ground state

    Args:
        state: Ground state of the limit problem
        N: Dimension (defaults to the state's)
        n_t: Uniform samples of the parameter t
        tau0: First dilation of the planar path
        tau1: Last dilation of the planar path
        overshoot: Factor pushing the endpoint past the energy target

    Returns:
        MPCurve: Path samples with the ground state included at t_star
    """
    N = state.dimension if N is None else N
    m = state.energy
    target = -0.5 * m
    rel_tol = 1e-7

    if N >= 3:
        theta = overshoot * _root_beyond(lambda tau: scaled_energy(state, 1.0, tau) - target, 1.0, "theta")
        t_star = 1.0 / theta
        t = np.union1d(np.linspace(0.0, 1.0, n_t), [t_star])
        amplitudes = np.where(t > 0.0, 1.0, 0.0)
        dilations = np.where(t > 0.0, t * theta, 1.0)
        curve_params = dict(theta=theta)
    else:
        s_grid = np.linspace(0.0, 1.0, 201)
        for _ in range(20):
            first_leg = max(scaled_energy(state, s, tau0) for s in s_grid)
            if first_leg <= m * (1.0 + rel_tol):
                break
            tau0 *= 0.5
        else:
            raise BracketError("no admissible first dilation found for the planar path")
        last_leg = max(scaled_energy(state, 1.0 + s, tau1) for s in s_grid)
        if last_leg > m * (1.0 + rel_tol):
            raise BracketError(f"amplitude ramp at tau1={tau1} rises above the ground-state level")
        tau2 = overshoot * _root_beyond(lambda s: scaled_energy(state, s, tau1) - target, 1.0, "tau2")
        t_star = (1.0 + (1.0 - tau0) / (tau1 - tau0)) / 3.0
        t = np.union1d(np.linspace(0.0, 1.0, n_t), [t_star])
        curve_params = dict(tau0=tau0, tau1=tau1, tau2=tau2)

    curve = MPCurve(
        state=state,
        t=t,
        amplitudes=np.zeros_like(t),
        dilations=np.ones_like(t),
        energies=np.zeros_like(t),
        t_star=t_star,
        **curve_params,
    )
    if N >= 3:
        curve.amplitudes, curve.dilations = amplitudes, dilations
    else:
        pairs = np.array([curve.params_at(ti) for ti in t])
        curve.amplitudes, curve.dilations = pairs[:, 0], pairs[:, 1]
        # the ground state itself sits at t_star
        curve.amplitudes[t == t_star], curve.dilations[t == t_star] = 1.0, 1.0
    curve.energies = np.array(
        [scaled_energy(state, s, tau) for s, tau in zip(curve.amplitudes, curve.dilations)]
    )

    end_energy = float(curve.energies[-1])
    if end_energy >= target:
        raise BracketError(f"path endpoint energy {end_energy:.6g} is not below -m/2")
    logger.info(
        f"Mountain-pass path N={N}: max={curve.energy_max:.10g} (m={m:.10g}), end={end_energy:.6g}, t*={t_star:.4f}"
    )
    return curve


def m_curve(
    k_values: Iterable[float],
    spec: NonlinearitySpec,
    N: int = 2,
    tol: float = 1e-11,
    r_max_scale: float = 20.0,
    n_points: int = 4096,
) -> pd.DataFrame:
    """Table of (k, m_k) sorted in k"""
    rows = []
    for k in sorted(float(k) for k in k_values):
        state = solve_ground_state(k, spec, N, tol=tol, r_max_scale=r_max_scale, n_points=n_points)
        rows.append(
            {
                "k": k,
                "m_k": state.energy,
                "m_k_over_k": state.energy / k,
                "U0": state.profile.U0,
                "pohozaev": pohozaev_residual(state),
            }
        )
    table = pd.DataFrame(rows, columns=["k", "m_k", "m_k_over_k", "U0", "pohozaev"])
    if len(table) > 1 and not bool(np.all(np.diff(table["m_k"].to_numpy()) > 0.0)):
        logger.warning("m_k is not strictly increasing on the sampled k grid")
    return table


def profile_table(state: GroundState) -> pd.DataFrame:
    """Columns r, U, dU of the radial profile"""
    return pd.DataFrame(
        {"r": state.profile.r, "U": state.profile.values, "dU": state.profile.derivatives}
    )
