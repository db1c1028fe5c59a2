# storage/exports.py
# -*- coding: utf-8 -*-
"""
Atomic writers for run outputs. Every file lands through a temp file in the
target directory and os.replace, so readers never see a partial file.
CSV files open with `# key=value` provenance lines and JSON reports carry a
"provenance" object; nothing time-dependent is written.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import struct
import tempfile
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from domain.errors import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

PATH_MAGIC = b"MVLBPATH"


def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"Output directory {path!r} is not writable: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"Output directory {path!r} is not writable.")
    return path


def atomic_write_bytes(path: str, data: bytes) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    ensure_dir(directory)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise ConfigError(f"Cannot write {path!r}: {exc}") from exc
    logger.debug("wrote %s (%d bytes)", path, len(data))
    return path


def atomic_write_text(path: str, text: str) -> str:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dumps_json(report: Mapping[str, object], provenance: Mapping[str, object]) -> str:
    body = dict(_clean(report))
    body["provenance"] = _clean(dict(provenance))
    return json.dumps(body, sort_keys=True, indent=2) + "\n"


def write_json(path: str, report: Mapping[str, object], provenance: Mapping[str, object]) -> str:
    return atomic_write_text(path, dumps_json(report, provenance))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[object]],
              provenance: Mapping[str, object]) -> str:
    buf = io.StringIO()
    for key in sorted(provenance):
        buf.write(f"# {key}={provenance[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        if len(row) != len(header):
            raise InvalidInputError(f"CSV row has {len(row)} fields, header has {len(header)}.")
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[object]],
              provenance: Mapping[str, object]) -> str:
    return atomic_write_text(path, dumps_csv(header, rows, provenance))


def read_csv(path: str) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    """(provenance, rows) of a file written by write_csv."""
    prov: Dict[str, str] = {}
    lines: List[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# ") and "=" in line and not lines:
                k, v = line[2:].rstrip("\n").split("=", 1)
                prov[k] = v
            else:
                lines.append(line)
    return prov, list(csv.DictReader(lines))


def pack_paths(times, increments) -> bytes:
    """MVLBPATH, M and N as <u8, then M+1 times and N x M increments as <f8."""
    times = np.ascontiguousarray(times, dtype="<f8")
    inc = np.ascontiguousarray(increments, dtype="<f8")
    if inc.ndim != 2 or times.ndim != 1 or times.size != inc.shape[1] + 1:
        raise InvalidInputError("increments must be (N, M) with M + 1 times.")
    N, M = inc.shape
    return PATH_MAGIC + struct.pack("<QQ", M, N) + times.tobytes() + inc.tobytes()


def unpack_paths(data: bytes) -> Tuple[np.ndarray, np.ndarray]:
    if data[:8] != PATH_MAGIC:
        raise InvalidInputError("Not a movlab path dump (bad magic).")
    M, N = struct.unpack("<QQ", data[8:24])
    expected = 24 + 8 * (M + 1) + 8 * N * M
    if len(data) != expected:
        raise InvalidInputError(f"Path dump has {len(data)} bytes, expected {expected}.")
    times = np.frombuffer(data, dtype="<f8", count=M + 1, offset=24)
    inc = np.frombuffer(data, dtype="<f8", count=N * M, offset=24 + 8 * (M + 1)).reshape(N, M)
    return times.copy(), inc.copy()


def write_paths(path: str, times, increments) -> str:
    return atomic_write_bytes(path, pack_paths(times, increments))


class OutputWriter:
    """Writes one run's files under out_dir and remembers what it wrote."""

    def __init__(self, out_dir: str, provenance: Mapping[str, object]):
        self.out_dir = ensure_dir(out_dir)
        self.provenance = dict(provenance)
        self.written: List[Tuple[str, str]] = []

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _record(self, path: str, kind: str) -> str:
        self.written.append((path, kind))
        return path

    def json(self, name: str, report: Mapping[str, object]) -> str:
        return self._record(write_json(self._path(name), report, self.provenance), "json")

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
        return self._record(write_csv(self._path(name), header, rows, self.provenance), "csv")

    def paths(self, name: str, times, increments) -> str:
        return self._record(write_paths(self._path(name), times, increments), "paths")

    def text(self, name: str, text: str, kind: str = "text") -> str:
        return self._record(atomic_write_text(self._path(name), text), kind)
