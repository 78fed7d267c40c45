import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from commands import checks, ground_state, spike
from core.config import settings
from core.exceptions import ConfigError, SpikeLabError
from models.schemas import RunConfig
from utils.file_utils import FileUtils

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    """Root logging: stream handler plus an optional file handler"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if settings.SPIKELAB_LOG_FILE is not None:
        FileUtils.ensure_dir(settings.SPIKELAB_LOG_FILE.parent)
        handlers.append(logging.FileHandler(settings.SPIKELAB_LOG_FILE))
    logging.basicConfig(
        level=settings.SPIKELAB_LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikelab",
        description="Semiclassical spike solutions of -eps^2 Delta u + V(x) u = f(u) by truncated min-max",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--n", type=int, default=None, help="Grid points per dimension")
    common.add_argument("--spacing", type=float, default=None, help="Fixed grid spacing")
    common.add_argument("--a", type=float, default=None, help="Truncation slope")

    p = sub.add_parser("ground-state", parents=[common], help="Solve the limit problem")
    p.add_argument("--k", type=float, default=None, help="Linear coefficient")

    p = sub.add_parser("mcurve", parents=[common], help="Ground-state level as a function of k")
    p.add_argument("--mcurve", required=True, metavar="A:B:N", help="k range, N points on [A, B]")

    p = sub.add_parser("truncation-check", parents=[common], help="Hypotheses on f and truncation properties")
    p.add_argument("--samples", type=int, default=10_000, help="Random samples per check")
    p.add_argument("--seed", type=int, default=0, help="Sampling seed")

    sub.add_parser("potential-check", parents=[common], help="Bounds, critical point and radius selection of V")

    p = sub.add_parser("spike", parents=[common], help="Full pipeline at one eps")
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("sweep", parents=[common], help="Pipeline over a list of eps")
    p.add_argument("--eps-list", type=str, default=None, help="Comma separated eps values")
    p.add_argument("--workers", type=int, default=None, help="Worker pool cap")

    p = sub.add_parser("degree", parents=[common], help="Brouwer degree of the barycenter map")
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("report", parents=[common], help="Convergence report of a sweep directory")
    p.add_argument("--sweep-dir", type=Path, required=True)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    overrides: Dict[str, Dict[str, Any]] = {}
    if args.n is not None:
        overrides.setdefault("grid", {})["n"] = args.n
    if args.spacing is not None:
        overrides.setdefault("grid", {})["spacing"] = args.spacing
    if args.a is not None:
        overrides.setdefault("truncation", {})["a"] = args.a
    if getattr(args, "eps_list", None):
        try:
            eps_list = [float(v) for v in args.eps_list.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--eps-list '{args.eps_list}' is not a comma separated list of numbers")
        overrides.setdefault("sweep", {})["eps_list"] = eps_list
    return overrides


def load_config(path: Optional[Path], overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """
    Read a JSON run configuration and apply flag overrides

    Args:
        path: JSON file, or None for the defaults
        overrides: Section -> field -> value

    Returns:
        RunConfig: Validated configuration
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    for section, values in (overrides or {}).items():
        data.setdefault(section, {}).update(values)
    return RunConfig.model_validate(data)


def _output_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    if args.out is not None:
        return args.out
    if config.output.dir is not None:
        return config.output.dir
    return settings.SPIKELAB_OUTPUT_DIR / args.command


def dispatch(args: argparse.Namespace, config: RunConfig, out_dir: Path) -> List[Path]:
    if args.command == "ground-state":
        return ground_state.cmd_ground_state(config, out_dir, k=args.k)
    if args.command == "mcurve":
        return ground_state.cmd_mcurve(config, out_dir, ground_state.parse_k_range(args.mcurve))
    if args.command == "truncation-check":
        return checks.cmd_truncation_check(config, out_dir, n_samples=args.samples, seed=args.seed)
    if args.command == "potential-check":
        return checks.cmd_potential_check(config, out_dir)
    if args.command == "spike":
        return spike.cmd_spike(config, out_dir, args.eps)
    if args.command == "sweep":
        return spike.cmd_sweep(config, out_dir, workers=args.workers)
    if args.command == "degree":
        return spike.cmd_degree(config, out_dir, args.eps)
    if args.command == "report":
        return spike.cmd_report(config, out_dir, args.sweep_dir)
    raise ConfigError(f"unknown command {args.command}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point

    Exit codes: 0 success, 1 configuration or check failure, 2 solver
    failure, 3 boundary gap not positive, 4 saddle divergence.
    """
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config, _overrides(args))
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return 1
    except SpikeLabError as e:
        logger.error(e.detail)
        return e.exit_code

    out_dir = FileUtils.ensure_dir(_output_dir(args, config))
    logger.info(f"Running {args.command} into {out_dir}")
    code = 0
    try:
        written = dispatch(args, config, out_dir)
        logger.info(f"{args.command} wrote {len(written)} file(s)")
    except SpikeLabError as e:
        logger.error(f"{args.command} failed: {e.detail}")
        code = e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}: {e}")
        code = 1
    finally:
        files = [p for p in out_dir.iterdir() if p.is_file() and p.name != "manifest.json"]
        FileUtils.write_manifest(out_dir, config, files, command=" ".join(argv if argv is not None else sys.argv[1:]))
    return code


if __name__ == "__main__":
    sys.exit(main())
