"""On-disk artifact formats: VPKF feature matrices, JSONL manifests, atomic writes.

Every pipeline stage writes its declared outputs through :func:`atomic_write`
so an interrupted run never leaves a partial file at the final path.
"""

from __future__ import annotations

import contextlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

VPKF_MAGIC = b"VPKF"
VPKF_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@contextlib.contextmanager
def atomic_write(path: str | Path, mode: str = "wb"):
    """Write to a temp file in the target directory, rename into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _pack_matrix(matrix: np.ndarray) -> bytes:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"VPKF stores 2-D matrices, got shape {matrix.shape}")
    data = np.ascontiguousarray(matrix, dtype="<f4")
    return _HEADER.pack(VPKF_MAGIC, VPKF_VERSION, data.shape[0], data.shape[1]) + data.tobytes()


def _unpack_matrix(buf: bytes, offset: int, source: str) -> tuple[np.ndarray, int]:
    if len(buf) - offset < _HEADER.size:
        raise ValueError(f"{source}: truncated VPKF header")
    magic, version, rows, cols = _HEADER.unpack_from(buf, offset)
    if magic != VPKF_MAGIC:
        raise ValueError(f"{source}: not a VPKF block (magic {magic!r})")
    if version != VPKF_VERSION:
        raise ValueError(f"{source}: unsupported VPKF version {version} (expected {VPKF_VERSION})")
    end = offset + _HEADER.size + 4 * rows * cols
    if len(buf) < end:
        raise ValueError(f"{source}: byte length {len(buf)} < expected {end}")
    flat = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=offset + _HEADER.size)
    return flat.reshape(rows, cols).copy(), end


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D matrix as a VPKF file (float32, little-endian, row-major)."""
    with atomic_write(path) as fh:
        fh.write(_pack_matrix(matrix))


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a VPKF file back into a float32 matrix."""
    raw = Path(path).read_bytes()
    matrix, end = _unpack_matrix(raw, 0, str(path))
    if len(raw) != end:
        raise ValueError(f"{path}: byte length {len(raw)} != expected {end}")
    return matrix


def write_jsonl(path: str | Path, records) -> None:
    with atomic_write(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    out = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(path: str | Path, obj) -> None:
    """Canonical JSON dump: sorted keys, fixed indentation, no timestamps."""
    with atomic_write(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path: str | Path):
    with Path(path).open() as fh:
        return json.load(fh)


_CKPT_LEN = struct.Struct("<I")


def write_checkpoint(path: str | Path, header: dict,
                     arrays: dict[str, np.ndarray]) -> None:
    """Checkpoint container: u32 header length, JSON header, VPKF blocks.

    Blocks follow in the sorted-name order recorded under header["arrays"];
    true shapes live in header["shapes"] (vectors are stored as one-row
    matrices).
    """
    names = sorted(arrays)
    header = dict(header)
    header["arrays"] = names
    header["shapes"] = {n: list(np.asarray(arrays[n]).shape) for n in names}
    blob = json.dumps(header, sort_keys=True).encode()
    with atomic_write(path) as fh:
        fh.write(_CKPT_LEN.pack(len(blob)))
        fh.write(blob)
        for name in names:
            a = np.asarray(arrays[name])
            fh.write(_pack_matrix(a.reshape(1, -1) if a.ndim == 1 else a))


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_LEN.size:
        raise ValueError(f"{path}: truncated checkpoint")
    (hlen,) = _CKPT_LEN.unpack_from(raw)
    if len(raw) < _CKPT_LEN.size + hlen:
        raise ValueError(f"{path}: truncated checkpoint header")
    header = json.loads(raw[_CKPT_LEN.size : _CKPT_LEN.size + hlen].decode())
    offset = _CKPT_LEN.size + hlen
    arrays: dict[str, np.ndarray] = {}
    for name in header["arrays"]:
        matrix, offset = _unpack_matrix(raw, offset, f"{path}:{name}")
        arrays[name] = matrix.reshape(header["shapes"][name]).astype(np.float64)
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays
