import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, SolverError, SpikeLabError
from models.schemas import RunConfig
from services.limit_problem import (
    build_mp_curve,
    m_curve,
    nehari_residual,
    pohozaev_residual,
    profile_table,
    solve_ground_state,
)
from utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


def parse_k_range(text: str) -> np.ndarray:
    """Parse 'a:b:n' into n values of k evenly spaced on [a, b]"""
    try:
        a, b, n = text.split(":")
        values = np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise ConfigError(f"k range '{text}' is not of the form a:b:n")
    if values.size < 1 or np.any(values <= 0.0):
        raise ConfigError(f"k range '{text}' must contain positive values")
    return values


def cmd_ground_state(config: RunConfig, out_dir: Path, k: Optional[float] = None) -> List[Path]:
    """
    Solve the limit problem and write the profile with its identity residuals

    Args:
        config: Run configuration
        out_dir: Output directory
        k: Linear coefficient, overriding limit_problem.k

    Returns:
        List[Path]: Written files
    """
    lp = config.limit_problem
    k = lp.k if k is None else k
    formats = config.output.formats
    try:
        state = solve_ground_state(
            k, config.nonlinearity, lp.dimension, tol=lp.tol, r_max_scale=lp.r_max_scale, n_points=lp.n_points
        )
        curve = build_mp_curve(state, n_t=config.minmax.n_t, tau0=config.minmax.tau0, tau1=config.minmax.tau1)
    except SpikeLabError:
        raise
    except Exception as e:
        logger.error(f"Error solving the limit problem at k={k}: {e}")
        raise SolverError(f"limit problem at k={k} failed: {e}")

    report = {
        **state.summary(),
        "pohozaev_residual": pohozaev_residual(state),
        "nehari_residual": nehari_residual(state),
        "grad_equals_l2_gap": abs(state.grad_norm_sq - state.l2_norm_sq) / state.l2_norm_sq,
        "curve": {
            "t_star": curve.t_star,
            "energy_max": curve.energy_max,
            "end_energy": float(curve.energies[-1]),
            "theta": curve.theta,
            "tau0": curve.tau0,
            "tau1": curve.tau1,
            "tau2": curve.tau2,
        },
    }
    written = []
    if "json" in formats:
        written.append(FileUtils.write_json(out_dir / "ground_state.json", report))
    if "csv" in formats:
        written.append(FileUtils.write_csv(out_dir / "profile.csv", profile_table(state)))
        path_table = pd.DataFrame(
            {"t": curve.t, "amplitude": curve.amplitudes, "dilation": curve.dilations, "energy": curve.energies}
        )
        written.append(FileUtils.write_csv(out_dir / "mp_curve.csv", path_table))

    logger.info(
        f"Ground state k={k}, N={state.dimension}: m_k={state.energy:.10g}, U(0)={state.profile.U0:.10g}, "
        f"Pohozaev residual {report['pohozaev_residual']:.2e}"
    )
    return written


def cmd_mcurve(config: RunConfig, out_dir: Path, k_values: Sequence[float]) -> List[Path]:
    """
    Ground-state levels on a grid of k

    Args:
        config: Run configuration
        out_dir: Output directory
        k_values: Linear coefficients

    Returns:
        List[Path]: Written files
    """
    lp = config.limit_problem
    table = m_curve(
        k_values, config.nonlinearity, lp.dimension, tol=lp.tol, r_max_scale=lp.r_max_scale, n_points=lp.n_points
    )
    increasing = bool(np.all(np.diff(table["m_k"].to_numpy()) > 0.0))
    written = []
    if "csv" in config.output.formats:
        written.append(FileUtils.write_csv(out_dir / "mcurve.csv", table))
    if "json" in config.output.formats:
        written.append(
            FileUtils.write_json(
                out_dir / "mcurve.json",
                {"rows": table.to_dict(orient="records"), "strictly_increasing": increasing},
            )
        )
    logger.info(f"m_k sampled at {len(table)} values of k, strictly increasing: {increasing}")
    return written
