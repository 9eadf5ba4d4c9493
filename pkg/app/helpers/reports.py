"""JSON reports, CSV tables and the matrix file format.

Matrices are ``{"rows": r, "cols": c, "data": [[re, im], ...]}`` in row-major
order. Reports carry no timestamps, hostnames or paths, so two runs with the
same seed and settings produce byte-identical files.
"""

import csv
import dataclasses
import enum
import json
import math

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ParseError, UsageError


SCHEMA = "holokit.report/1"
FLOAT_FORMAT = "%.16e"


# ################################################################################
# matrices


def encode_matrix(matrix):
    matrix = np.asarray(matrix, dtype=np.complex128)

    if matrix.ndim != 2:
        raise ValueError(f"only 2-d matrices can be encoded, got {matrix.shape}")

    return {
        "rows": int(matrix.shape[0]),
        "cols": int(matrix.shape[1]),
        "data": [[float(z.real), float(z.imag)] for z in matrix.ravel()],
    }


def decode_matrix(record, index=None):
    if not isinstance(record, dict) or not {"rows", "cols", "data"} <= record.keys():
        raise ParseError("matrix needs rows, cols and data", record=index)

    rows, cols, data = record["rows"], record["cols"], record["data"]

    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 1 or cols < 1:
        raise ParseError(f"invalid matrix shape {rows}x{cols}", record=index)

    if not isinstance(data, list) or len(data) != rows * cols:
        size = len(data) if isinstance(data, list) else type(data).__name__
        raise ParseError(f"expected {rows * cols} entries, got {size}", record=index)

    values = []
    for entry in data:
        if (
            not isinstance(entry, list)
            or len(entry) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in entry)
        ):
            raise ParseError(f"entry {entry!r} is not a [re, im] pair", record=index)

        values.append(complex(entry[0], entry[1]))

    return np.array(values, dtype=np.complex128).reshape(rows, cols)


def save_matrices(path, matrices):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    payload = [encode_matrix(m) for m in matrices]
    path.write_text(json.dumps(payload, indent=2) + "\n")

    return path


def _read_json(path):
    path = Path(path)

    if not path.exists():
        raise UsageError(f"file {path} not found")

    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid json at line {err.lineno}: {err.msg}") from err


def load_transfer_matrices(path):
    payload = _read_json(path)

    if isinstance(payload, dict):
        payload = payload.get("matrices")

    if not isinstance(payload, list) or not payload:
        raise ParseError(f"{path}: expected a non-empty list of matrices")

    matrices = []
    for k, record in enumerate(payload):
        matrix = decode_matrix(record, index=k)

        if matrix.shape[0] != matrix.shape[1]:
            raise ParseError(f"transfer matrix must be square, got {matrix.shape}", record=k)

        if matrices and matrix.shape != matrices[0].shape:
            raise ParseError(
                f"dimension {matrix.shape[0]} differs from d={matrices[0].shape[0]}",
                record=k,
            )

        matrices.append(matrix)

    return matrices


def load_gate(path):
    payload = _read_json(path)

    if isinstance(payload, list):
        if len(payload) != 1:
            raise ParseError(f"{path}: expected exactly one gate matrix, got {len(payload)}")
        payload = payload[0]

    return decode_matrix(payload, index=0)


# ################################################################################
# reports


@dataclass
class SummaryRecord:
    metric: str
    value: float
    expected: float
    tolerance: float
    status: str = "fail"

    @classmethod
    def check(cls, metric, value, expected, tolerance):
        value = float("nan") if value is None else float(value)
        passed = math.isfinite(value) and abs(value - expected) <= tolerance

        return cls(
            metric=metric,
            value=value,
            expected=float(expected),
            tolerance=float(tolerance),
            status="pass" if passed else "fail",
        )

    @property
    def passed(self):
        return self.status == "pass"


def jsonable(value):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}

    if isinstance(value, enum.Enum):
        return value.value

    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}

    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]

    if isinstance(value, np.ndarray):
        if value.ndim == 2 and np.iscomplexobj(value):
            return encode_matrix(value)
        return [jsonable(v) for v in value.tolist()]

    if isinstance(value, (bool, np.bool_)):
        return bool(value)

    if isinstance(value, (int, np.integer)):
        return int(value)

    if isinstance(value, (complex, np.complexfloating)):
        return [jsonable(float(value.real)), jsonable(float(value.imag))]

    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None

    return value


def build_report(study, seed, config, config_sha256, result, checks):
    return {
        "schema": SCHEMA,
        "version": __version__,
        "study": study,
        "seed": seed,
        "config": jsonable(config),
        "config_sha256": config_sha256,
        "result": jsonable(result),
        "checks": jsonable(list(checks)),
        "status": "pass" if all(c.passed for c in checks) else "fail",
    }


def dumps(report):
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(directory, report):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    path = directory / "report.json"
    path.write_text(dumps(report))

    return path


# ################################################################################
# tables


def _cell(value):
    if value is None:
        return ""

    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()

    if isinstance(value, (int, np.integer)):
        return str(int(value))

    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value) if math.isfinite(value) else ""

    return str(value)


def write_csv(path, fieldnames, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()

        for row in rows:
            writer.writerow({key: _cell(row.get(key)) for key in fieldnames})

    return path
