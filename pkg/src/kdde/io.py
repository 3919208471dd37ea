"""CSV ingestion for the command line."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


class CsvParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_csv(text: str) -> tuple[np.ndarray, list[str] | None]:
    """Parse comma-separated numbers with an optional header row.

    The first row is a header when any of its cells is non-numeric.  Row and
    column numbers in errors are 1-based and count the header line.
    """
    rows = [r for r in csv.reader(io.StringIO(text))]
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise CsvParseError("no data rows", row=1)
    header = None
    first = [c.strip() for c in rows[0]]
    if not all(_is_number(c) for c in first):
        header = first
        body, offset = rows[1:], 2
    else:
        body, offset = rows, 1
    if not body:
        raise CsvParseError("no data rows after header", row=offset)
    width = len(header) if header else len(body[0])
    out = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise CsvParseError(f"expected {width} columns, found {len(row)}", row=i + offset)
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise CsvParseError(f"non-numeric cell {cell!r}", row=i + offset, col=j + 1) from None
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise CsvParseError("non-finite value", row=int(i) + offset, col=int(j) + 1)
    return out, header


def read_csv(path) -> tuple[np.ndarray, list[str] | None]:
    return parse_csv(Path(path).read_text(encoding="utf-8"))


def write_csv(fh, rows, header=None):
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer, str)) else v for v in row])
