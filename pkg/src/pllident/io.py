"""CSV and JSON persistence.

Numbers are written with 17 significant digits so every file round-trips
exactly. Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .series import TimeSeries

JITTER_TOL = 1e-6


class SeriesFormatError(ValueError):
    def __init__(self, path, message, line=None):
        where = f"{path}" + (f": line {line}" if line is not None else "")
        super().__init__(f"{where}: {message}")
        self.path, self.line = path, line


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % x


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(path, header, columns) -> Path:
    """Write equal-length columns under ``header`` as CSV."""
    columns = [np.asarray(c) for c in columns]
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in columns))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row; returns ``(header, data)``."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise SeriesFormatError(path, f"cannot read: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SeriesFormatError(path, "empty file") from None
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise SeriesFormatError(path, f"expected {len(header)} fields, got {len(row)}", line)
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise SeriesFormatError(path, f"non-numeric field in {row!r}", line) from None
            if not all(math.isfinite(v) for v in values):
                raise SeriesFormatError(path, "non-finite value", line)
            rows.append(values)
    if not rows:
        return header, np.empty((0, len(header)))
    return header, np.array(rows)


def read_series(path, column: str = "value", time_column: str = "t") -> TimeSeries:
    """Load a uniformly sampled series from CSV.

    The relative deviation of every step from the mean step must stay below
    ``1e-6``; otherwise the worst offending line is reported.
    """
    header, data = read_table(path)
    for name in (time_column, column):
        if name not in header:
            raise SeriesFormatError(path, f"missing column {name!r} (have {header})")
    if len(data) < 2:
        raise SeriesFormatError(path, "need at least 2 samples")
    t = data[:, header.index(time_column)]
    v = data[:, header.index(column)]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not dt > 0:
        raise SeriesFormatError(path, "time column must increase")
    dev = np.abs(steps - dt) / dt
    worst = int(np.argmax(dev))
    if dev[worst] > JITTER_TOL:
        # data row worst+1 sits on file line worst+3 (header is line 1)
        raise SeriesFormatError(
            path, f"non-uniform sampling (relative step deviation {dev[worst]:.3g})", worst + 3
        )
    return TimeSeries(float(t[0]), float(dt), v)


def write_series(path, series: TimeSeries, column: str = "value") -> Path:
    return write_table(path, ["t", column], [series.times, series.values])


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")
