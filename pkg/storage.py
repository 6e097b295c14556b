"""
Output files. Every writer goes through a temporary file in the target
directory followed by os.replace, so readers never see a partial file.
"""

import csv
import io
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, Union

import numpy as np

from config import settings
from errors import HolderLabError
from models import CoefficientArray, SampledPath
from wavelets import DyadicTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b"HLAB"
BINARY_VERSION = 1
# magic, version, J_grid, i0, n, seed, provenance fingerprint
_HEADER = struct.Struct("<4sHHqQQ16s")


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise HolderLabError(f"Error writing {path}: {e}")
    logger.debug("Wrote %s (%d bytes)", path, len(data))
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buffer.getvalue())


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    document = {"schema_version": settings.SCHEMA_VERSION, **payload}
    return atomic_write_text(path, json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "model_dump"):
        return value.model_dump()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def write_path_csv(path: PathLike, sampled: SampledPath) -> Path:
    return write_csv(path, ["t", "value"], zip(sampled.times.tolist(), sampled.values.tolist()))


def encode_path(sampled: SampledPath) -> bytes:
    seed = sampled.provenance.seed or 0
    header = _HEADER.pack(MAGIC, BINARY_VERSION, sampled.J_grid, sampled.i0, sampled.n, seed,
                          sampled.provenance.fingerprint())
    return header + sampled.values.astype("<f8").tobytes()


def write_path_binary(path: PathLike, sampled: SampledPath) -> Path:
    return atomic_write_bytes(path, encode_path(sampled))


@dataclass
class BinaryPath:
    J_grid: int
    i0: int
    seed: int
    fingerprint: bytes
    values: np.ndarray

    @property
    def window(self):
        step = 2.0 ** -self.J_grid
        return self.i0 * step, (self.i0 + self.values.size - 1) * step


def read_path_binary(path: PathLike) -> BinaryPath:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise HolderLabError(f"{path} is too short to be a path file")
    magic, version, J_grid, i0, n, seed, fingerprint = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise HolderLabError(f"{path} is not a path file (bad magic {magic!r})")
    if version != BINARY_VERSION:
        raise HolderLabError(f"{path} has unsupported version {version}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if values.size != n:
        raise HolderLabError(f"{path} declares {n} samples but holds {values.size}")
    return BinaryPath(J_grid=J_grid, i0=i0, seed=seed, fingerprint=fingerprint, values=values.astype(np.float64))


def write_coefficients_csv(path: PathLike, coeffs: CoefficientArray) -> Path:
    return write_csv(path, ["j", "k", "c"], coeffs.entries())


def write_table_csv(path: PathLike, table: DyadicTable) -> Path:
    """Wavelet samples psi(n 2^-resolution) as grid_point,value rows."""
    return write_csv(path, ["grid_point", "value"], table.rows())
