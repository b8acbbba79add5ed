"""Stable on-disk formats: JSON, CSV and binary state dumps.

JSON is UTF-8 with sorted keys; floats use Python's shortest round-trip
repr and non-finite values become null. CSV has a header row, ``,``
separator and the same float formatting. Binary dumps are

    b"HIST" | uint32 little-endian header length | JSON header | complex128 LE data

where the header records the dimension, basis-ordering tag and sector tag.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np

from .exceptions import DimensionMismatch, InvalidConfig
from .spin_model import BASIS_TAG

MAGIC = b"HIST"
FORMAT_VERSION = 1


def to_jsonable(obj):
    """Recursively convert numpy / dataclass / complex values into JSON types."""
    if hasattr(obj, "to_dict") and not isinstance(obj, type):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent=2):
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=indent, ensure_ascii=False, allow_nan=False)


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def canonical_hash(obj):
    """sha256 of the compact, key-sorted JSON form."""
    text = json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, np.integer):
        return str(int(v))
    return v


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_state(path, vec, sector="full", basis=BASIS_TAG, extra=None):
    """Write one state vector (or the columns of a 2-D array) in the binary format."""
    data = np.ascontiguousarray(np.asarray(vec, dtype="<c16"))
    if data.ndim not in (1, 2):
        raise DimensionMismatch("state payload must be 1-D or 2-D")
    header = {
        "format_version": FORMAT_VERSION,
        "dimension": int(data.shape[0]),
        "columns": 1 if data.ndim == 1 else int(data.shape[1]),
        "basis": basis,
        "sector": sector,
        "dtype": "complex128-le",
        "order": "column-major",
    }
    if extra:
        header.update(to_jsonable(extra))
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(data.T.tobytes() if data.ndim == 2 else data.tobytes())


def read_state(path):
    """Return (header, array); 2-D payloads come back as (dimension, columns)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise InvalidConfig(f"{path}: not a state dump")
    (n,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + n].decode("utf-8"))
    data = np.frombuffer(raw[8 + n :], dtype="<c16")
    dim, cols = header["dimension"], header["columns"]
    if data.size != dim * cols:
        raise DimensionMismatch(f"{path}: payload has {data.size} amplitudes, header says {dim * cols}")
    data = data.reshape(cols, dim).T.copy() if cols > 1 or header.get("columns_2d") else data.copy()
    return header, data


def write_eigen_result(path, res):
    """EigenResult as a binary dump; eigenvalues and residuals go in the header."""
    write_state(path, res.eigenvectors, sector=res.sector, extra={"eigen": res.header(), "columns_2d": True})
