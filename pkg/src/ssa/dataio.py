"""CSV ingestion and atomic, deterministic file output."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray


class DataError(ValueError):
    """Malformed or unusable input data."""


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_numeric_csv(path: str | Path) -> tuple[list[str] | None, NDArray[np.float64]]:
    """Read a numeric CSV; a first row with any non-numeric cell is taken as the header.

    Blank lines and lines starting with ``#`` are skipped. Errors name the
    offending line.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = None
    rows: list[list[float]] = []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not cells or all(c == "" for c in cells) or cells[0].startswith("#"):
            continue
        if header is None and not rows and not all(_is_number(c) for c in cells):
            header = cells
            width = len(cells)
            continue
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(cells)}")
        try:
            values = [float(c) for c in cells]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
        if not all(np.isfinite(values)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def read_labeled_csv(path: str | Path) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Columns ``x1..xd,y``: returns the design and the responses."""
    _, data = read_numeric_csv(path)
    if data.shape[1] < 2:
        raise DataError(f"{path}: need at least one coordinate column and a response column")
    return data[:, :-1], data[:, -1]


def read_points_csv(path: str | Path, d: int) -> NDArray[np.float64]:
    """Query points with ``d`` coordinate columns; a trailing response column is ignored."""
    _, data = read_numeric_csv(path)
    if data.shape[1] not in (d, d + 1):
        raise DataError(f"{path}: expected {d} coordinate columns, found {data.shape[1]}")
    return data[:, :d]


def fmt_float(v: float) -> str:
    return repr(float(v))


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_text_atomic(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def coordinate_header(d: int) -> list[str]:
    return [f"x{j + 1}" for j in range(d)]
