"""CSV matrix files: comma-separated float rows, no header.

Values are written with ``repr`` (shortest round-trip form), so reading a
written file gives back the same float64 bits.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .errors import MatrixParseError


def parse_csv_matrix(text: str, source: str = "<string>") -> np.ndarray:
    rows = []
    for lineno, record in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not record or all(not cell.strip() for cell in record):
            continue
        try:
            values = [float(cell) for cell in record]
        except ValueError as exc:
            raise MatrixParseError(f"{source}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise MatrixParseError(f"{source}:{lineno}: non-finite value")
        if rows and len(values) != len(rows[0]):
            raise MatrixParseError(
                f"{source}:{lineno}: expected {len(rows[0])} columns, found {len(values)}"
            )
        rows.append(values)
    if not rows:
        raise MatrixParseError(f"{source}: no data rows")
    return np.array(rows, dtype=np.float64)


def format_csv_matrix(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=np.float64)
    return "".join(",".join(repr(float(x)) for x in row) + "\n" for row in a)


def read_csv_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MatrixParseError(f"{path}: {exc.strerror or exc}") from None
    return parse_csv_matrix(text, str(path))


def write_csv_matrix(path: str | Path, a: np.ndarray) -> None:
    Path(path).write_text(format_csv_matrix(a))
