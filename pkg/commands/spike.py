import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.exceptions import (
    BoundaryGapError,
    ConfigError,
    SaddleDivergenceError,
    SolverError,
    SpikeLabError,
)
from models.results import SpikeOutcome, SpikeRun
from models.schemas import RunConfig
from services.diagnostics import (
    TABLE_COLUMNS,
    convergence_table,
    summarize,
    table_text,
)
from services.grid_solver import field_slice
from services.minmax import default_t0
from services.pipeline import SpikePipeline, run_sweep
from utils.file_utils import FileUtils

logger = logging.getLogger(__name__)

STATUS_ERRORS = {
    "boundary_gap": BoundaryGapError,
    "saddle_divergence": SaddleDivergenceError,
    "solver_error": SolverError,
}


def _outcome_report(outcome: SpikeOutcome) -> Dict[str, Any]:
    report: Dict[str, Any] = {"row": outcome.row.model_dump(mode='json')}
    for name in ("cone_max", "gap", "bracket", "diagnostics", "untruncation"):
        part = getattr(outcome, name)
        if part is not None:
            report[name] = part.model_dump(mode='json')
    if outcome.degree is not None:
        report["degree"] = {"t": outcome.degree.t, "degree": outcome.degree.degree}
    if outcome.degree_sweep:
        report["degree_sweep"] = [{"t": r.t, "degree": r.degree} for r in outcome.degree_sweep]
    if outcome.bracket is not None:
        report["bracket"]["width"] = outcome.bracket.width
    if outcome.saddle is not None:
        report["saddle"] = outcome.saddle.model_dump(mode='json', exclude={"u_eps"})
        report["saddle"]["lambda_norm"] = outcome.saddle.lambda_norm
    return report


def _write_outcome(outcome: SpikeOutcome, out_dir: Path, formats: Sequence[str]) -> List[Path]:
    eps = outcome.row.eps
    written = []
    if "json" in formats:
        written.append(FileUtils.write_json(out_dir / f"spike_{eps:g}.json", _outcome_report(outcome)))
    if outcome.saddle is None:
        return written
    u = outcome.saddle.u_eps
    if "field" in formats:
        written.extend(
            FileUtils.dump_field(
                out_dir / f"u_eps_{eps:g}.f64", u, eps=eps, description="constrained saddle u_eps"
            )
        )
    if "csv" in formats:
        x, line = field_slice(u, axis=0)
        written.append(FileUtils.write_csv(out_dir / f"u_eps_{eps:g}_slice.csv", pd.DataFrame({"x1": x, "u": line})))
    return written


def cmd_spike(config: RunConfig, out_dir: Path, eps: float) -> List[Path]:
    """
    Full pipeline at one eps

    Args:
        config: Run configuration
        out_dir: Output directory
        eps: Scale parameter

    Returns:
        List[Path]: Written files

    Raises:
        BoundaryGapError: The cone boundary is not below m (exit 3)
        SaddleDivergenceError: The saddle search failed (exit 4)
    """
    pipeline = SpikePipeline(config)
    pipeline.radius_check()
    try:
        outcome = pipeline.run_eps(eps)
    except (BoundaryGapError, SaddleDivergenceError, SolverError) as e:
        status = next(s for s, cls in STATUS_ERRORS.items() if isinstance(e, cls))
        row = SpikeRun(eps=eps, status=status, detail=e.detail)
        FileUtils.write_json(out_dir / f"spike_{eps:g}.json", {"row": row.model_dump(mode='json')})
        raise
    written = _write_outcome(outcome, out_dir, config.output.formats)
    logger.info(f"Spike at eps={eps} written to {out_dir}")
    return written


def cmd_sweep(config: RunConfig, out_dir: Path, workers: Optional[int] = None) -> List[Path]:
    """
    Pipeline over every eps of the sweep, with the convergence table

    Rows that fail keep their status in the table; after everything is
    written the first failure is raised so the exit code reflects it.

    Args:
        config: Run configuration
        out_dir: Output directory
        workers: Pool size cap

    Returns:
        List[Path]: Written files
    """
    outcomes = run_sweep(config, workers=workers)
    formats = config.output.formats
    written = []
    # single collector: workers return results, only this process writes
    for outcome in outcomes:
        written.extend(_write_outcome(outcome, out_dir, formats))

    rows = [o.row for o in outcomes]
    table = convergence_table(rows)
    written.append(FileUtils.write_csv(out_dir / "sweep.csv", table))
    written.append(FileUtils.write_text(out_dir / "sweep.txt", table_text(table)))
    if "json" in formats:
        written.append(
            FileUtils.write_json(
                out_dir / "sweep.json",
                {"rows": [r.model_dump(mode='json') for r in rows], "summary": summarize(rows)},
            )
        )
    logger.info(f"Sweep table:\n{table_text(table)}")

    failed = [r for r in rows if r.status != "ok"]
    if failed:
        first = failed[0]
        logger.error(f"{len(failed)} sweep row(s) failed; first at eps={first.eps}: {first.status}")
        status = {"failed": [r.model_dump(mode='json') for r in failed]}
        written.append(FileUtils.write_json(out_dir / "sweep_status.json", status))
        raise STATUS_ERRORS[first.status](f"eps={first.eps}: {first.detail}")
    return written


def cmd_degree(config: RunConfig, out_dir: Path, eps: float, t_values: Optional[Sequence[float]] = None) -> List[Path]:
    """
    Degree of psi_t on the boundary of B0 at scale eps

    Args:
        config: Run configuration
        out_dir: Output directory
        eps: Scale parameter
        t_values: Curve parameters; defaults to n_degree_t points on [t0, 1] and t_star

    Returns:
        List[Path]: Written files
    """
    pipeline = SpikePipeline(config)
    curve = pipeline.curve()
    if t_values is None:
        mm = config.minmax
        t0 = mm.t0 if mm.t0 is not None else default_t0(curve)
        t_values = np.union1d(np.linspace(t0, 1.0, mm.n_degree_t), [curve.t_star])
    reports = pipeline.degrees(eps, list(t_values))

    trace = pd.DataFrame([{"t": r.t, **sample} for r in reports for sample in r.trace])
    summary = {
        "eps": eps,
        "t_star": curve.t_star,
        "degrees": [{"t": r.t, "degree": r.degree} for r in reports],
        "all_one": all(r.degree == 1 for r in reports),
    }
    written = [FileUtils.write_json(out_dir / "degree.json", summary)]
    if "csv" in config.output.formats:
        written.append(FileUtils.write_csv(out_dir / "degree_trace.csv", trace))
    logger.info(f"Degrees at eps={eps}: {[r.degree for r in reports]}")
    return written


def _row_from_record(record: Dict[str, Any]) -> SpikeRun:
    clean = {}
    for key, value in record.items():
        if key not in SpikeRun.model_fields:
            continue
        if isinstance(value, float) and math.isnan(value):
            continue
        if key in ("degree", "degree_min", "degree_max"):
            value = int(value)
        clean[key] = value
    return SpikeRun(**clean)


def load_sweep(sweep_dir: Path) -> List[SpikeRun]:
    """Rows of a sweep directory, read back from its CSV table"""
    path = Path(sweep_dir) / "sweep.csv"
    if not path.exists():
        raise ConfigError(f"{path} does not exist; run a sweep into that directory first")
    table = pd.read_csv(path)
    missing = set(TABLE_COLUMNS) - set(table.columns)
    if missing:
        raise ConfigError(f"{path} lacks columns {sorted(missing)}")
    return [_row_from_record(record) for record in table.to_dict(orient="records")]


def cmd_report(config: RunConfig, out_dir: Path, sweep_dir: Path) -> List[Path]:
    """
    Convergence table, fits and monotonicity flags of an existing sweep

    Args:
        config: Run configuration
        out_dir: Output directory
        sweep_dir: Directory holding sweep.csv

    Returns:
        List[Path]: Written files
    """
    try:
        rows = load_sweep(sweep_dir)
    except SpikeLabError:
        raise
    except Exception as e:
        logger.error(f"Error reading sweep from {sweep_dir}: {e}")
        raise ConfigError(f"sweep in {sweep_dir} could not be read: {e}")
    table = convergence_table(rows)
    summary = summarize(rows)
    written = [
        FileUtils.write_csv(out_dir / "report.csv", table),
        FileUtils.write_text(out_dir / "report.txt", table_text(table)),
        FileUtils.write_json(out_dir / "report.json", summary),
    ]
    logger.info(f"Report for {len(rows)} sweep rows: monotone={summary['monotone']}, checks={summary['checks']}")
    return written
