import hashlib
import json
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
import pydantic
import scipy

from models.results import GridField


class HashUtils:
    """Content hashing for reproducibility records"""

    @staticmethod
    def calculate_file_hash(content: bytes) -> str:
        """
        Calculate SHA-256 hash of content

        Args:
            content: Bytes to hash

        Returns:
            str: SHA-256 hash in hexadecimal
        """
        return hashlib.sha256(content).hexdigest()

    @staticmethod
    def config_hash(config: pydantic.BaseModel) -> str:
        """SHA-256 of the canonical JSON form of a configuration"""
        canonical = json.dumps(config.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
        return HashUtils.calculate_file_hash(canonical.encode('utf-8'))


class FileUtils:
    """Writers for tables, reports, field dumps and manifests"""

    @staticmethod
    def ensure_dir(path: Path) -> Path:
        """Create a directory with its parents when missing"""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @staticmethod
    def write_json(path: Path, payload: Any) -> Path:
        """
        Write a JSON document with sorted keys

        Args:
            path: Target file
            payload: Pydantic model or JSON-compatible object

        Returns:
            Path: The written file
        """
        if isinstance(payload, pydantic.BaseModel):
            payload = payload.model_dump(mode='json')
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        return Path(path)

    @staticmethod
    def write_csv(path: Path, table: pd.DataFrame) -> Path:
        """
        Write a table without its index, floats at full precision

        Args:
            path: Target file
            table: Data frame to write

        Returns:
            Path: The written file
        """
        table.to_csv(path, index=False, float_format="%.17g")
        return Path(path)

    @staticmethod
    def write_text(path: Path, text: str) -> Path:
        """Write text with a trailing newline"""
        Path(path).write_text(text if text.endswith("\n") else text + "\n")
        return Path(path)

    @staticmethod
    def dump_field(path: Path, field: GridField, eps: Optional[float] = None, description: str = "") -> Tuple[Path, Path]:
        """
        Write a field as little-endian float64, row-major, with a JSON sidecar

        Args:
            path: Target of the binary dump (.f64)
            field: Grid field
            eps: Scale parameter of the problem the field belongs to
            description: Free text stored in the sidecar

        Returns:
            tuple: Paths of the binary dump and the sidecar
        """
        path = Path(path)
        path.write_bytes(np.ascontiguousarray(field.values, dtype='<f8').tobytes(order='C'))
        sidecar = path.with_suffix(".json")
        FileUtils.write_json(sidecar, {"n": field.n, "L": field.L, "eps": eps, "description": description})
        return path, sidecar

    @staticmethod
    def load_field(path: Path) -> GridField:
        """
        Read a field written by dump_field

        Args:
            path: Binary dump; its JSON sidecar must sit next to it

        Returns:
            GridField: Field with the grid recorded in the sidecar
        """
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        values = np.frombuffer(path.read_bytes(), dtype='<f8').reshape(meta["n"], meta["n"]).copy()
        return GridField(n=meta["n"], L=meta["L"], values=values)

    @staticmethod
    def library_versions() -> Dict[str, str]:
        """Versions of Python and the numerical stack"""
        return {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "pydantic": pydantic.VERSION,
        }

    @staticmethod
    def write_manifest(directory: Path, config: pydantic.BaseModel, files: Iterable[Path], command: str) -> Path:
        """
        Record config hash, library versions and file hashes of an output directory

        Args:
            directory: Output directory
            config: Run configuration
            files: Files written by the command
            command: Command name

        Returns:
            Path: The manifest file
        """
        directory = Path(directory)
        entries = {}
        for file in sorted({Path(f) for f in files}):
            entries[file.name] = HashUtils.calculate_file_hash(file.read_bytes())
        manifest = {
            "command": command,
            "config_sha256": HashUtils.config_hash(config),
            "versions": FileUtils.library_versions(),
            "files": entries,
            "created": datetime.now(timezone.utc).isoformat(timespec='seconds'),
        }
        return FileUtils.write_json(directory / "manifest.json", manifest)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")
