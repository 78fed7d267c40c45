import logging
from pathlib import Path
from typing import List

from core.exceptions import (
    ClassificationError,
    HypothesisViolation,
    RadiusSelectionError,
)
from models.schemas import RunConfig
from services.nonlinearity import check_hypotheses, crossover_threshold, truncation_suite
from services.potential import (
    certified_bounds,
    check_V0,
    classify_critical_point,
    select_radius_R1,
)
from utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


def cmd_truncation_check(config: RunConfig, out_dir: Path, n_samples: int = 10_000, seed: int = 0) -> List[Path]:
    """
    Hypotheses on f and the truncation properties, written before failing

    Args:
        config: Run configuration
        out_dir: Output directory
        n_samples: Random samples per truncation check
        seed: Seed of the sampling generator

    Returns:
        List[Path]: Written files

    Raises:
        HypothesisViolation: Any check fails
    """
    spec, params = config.nonlinearity, config.truncation
    results = check_hypotheses(spec, config.limit_problem.dimension)
    results += truncation_suite(spec, params, n_samples=n_samples, seed=seed)
    failed = [r.name for r in results if not r.passes]
    report = {
        "a": params.slope,
        "slope_bound": (1.0 - 2.0 / spec.mu) * params.alpha1,
        "crossover": crossover_threshold(spec, params.slope),
        "checks": [r.model_dump() for r in results],
        "passes": not failed,
    }
    written = [FileUtils.write_json(out_dir / "truncation_check.json", report)]
    for r in results:
        logger.info(f"{r.name}: {'pass' if r.passes else 'FAIL'} {r.detail}")
    if failed:
        logger.error(f"Truncation checks failed: {failed}")
        raise HypothesisViolation(f"failed checks: {', '.join(failed)}")
    return written


def cmd_potential_check(config: RunConfig, out_dir: Path) -> List[Path]:
    """
    Bounds of V, classification of the origin and the radius selection

    The constant potential has no critical-point structure, so only the
    bounds and the radius selection run for it.

    Args:
        config: Run configuration
        out_dir: Output directory

    Returns:
        List[Path]: Written files

    Raises:
        HypothesisViolation: V leaves its declared bounds
        ClassificationError: The origin is not a (V1)-(V3) critical point
        RadiusSelectionError: No candidate radius is accepted
    """
    spec = config.potential
    alpha1, alpha2 = certified_bounds(spec)
    v0 = check_V0(spec)
    report = {"kind": spec.kind, "alpha1": alpha1, "alpha2": alpha2, "V0": v0.model_dump()}
    error = None

    cls = None
    if spec.kind != "constant":
        try:
            cls = classify_critical_point(spec)
            report["classification"] = {
                "case": cls.case,
                "dim_E": cls.dim_E,
                "E_basis": cls.E_basis.tolist(),
                "hessian_eigenvalues": cls.hessian_eigenvalues.tolist(),
            }
        except ClassificationError as e:
            report["classification"] = {"error": e.detail}
            error = e

    if spec.N == 2:
        selection = select_radius_R1(spec, cls, spec.radius_candidates, strict=False)
        report["radius_selection"] = selection.model_dump()
        if selection.accepted is None and error is None:
            error = RadiusSelectionError(
                f"no candidate radius in {spec.radius_candidates} meets V = 1 transversally"
            )
    if not v0.passes and error is None:
        error = HypothesisViolation(f"V leaves [{alpha1:.6g}, {alpha2:.6g}] at {v0.violating_point}")

    report["passes"] = error is None
    written = [FileUtils.write_json(out_dir / "potential_check.json", report)]
    if error is not None:
        logger.error(f"Potential check failed: {error.detail}")
        raise error
    logger.info(f"Potential check passed for {spec.kind}")
    return written
