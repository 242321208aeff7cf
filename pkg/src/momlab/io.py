"""CSV formats for fields, potentials, measures and result tables.

Field files have a header ``x,value`` (1D) or ``x,y,value`` (2D) and one row
per node in row-major order; ``inf`` encodes ``+inf``. Potentials add a
``# convex`` comment line. Measure files start with a ``density`` or
``atoms`` line followed by field-style rows (``x,weight`` for atoms).
Every file is written atomically (temporary file, then rename).
"""

from __future__ import annotations

import io as _io
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .convexlab import Potential
from .errors import DomainError
from .grid import Field, Grid
from .measures import AtomicMeasure, Density, Measure

__all__ = [
    "FileFormatError",
    "atomic_write",
    "format_field",
    "write_field",
    "read_field",
    "read_potential",
    "write_measure",
    "read_measure",
    "write_table",
    "read_table",
]


class FileFormatError(DomainError):
    """A malformed input file; ``line`` is the 1-based line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
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


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _rows(field: Field, value_name: str) -> list[str]:
    g = field.grid
    if g.dim == 1:
        lines = [f"x,{value_name}"]
        lines += [f"{_fmt(x)},{_fmt(v)}" for x, v in zip(g.x, field.values)]
        return lines
    X, Y = g.mesh()
    lines = [f"x,y,{value_name}"]
    lines += [f"{_fmt(a)},{_fmt(b)},{_fmt(v)}"
              for a, b, v in zip(X.ravel(), Y.ravel(), field.values.ravel())]
    return lines


def format_field(field, convex: bool = False) -> str:
    if isinstance(field, Potential):
        field, convex = field.field, True
    lines = (["# convex"] if convex else []) + _rows(field, "value")
    return "\n".join(lines) + "\n"


def write_field(path, field, convex: bool = False) -> Path:
    """Write a Field (or Potential, which adds ``# convex``)."""
    return atomic_write(path, format_field(field, convex))


def _parse_rows(path, lines: Sequence[tuple[int, str]], ncols: int):
    out = []
    for lineno, text in lines:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != ncols:
            raise FileFormatError(path, lineno, f"expected {ncols} columns, got {len(parts)}")
        try:
            out.append([float(p) for p in parts])
        except ValueError:
            raise FileFormatError(path, lineno, f"not a number in {text!r}") from None
    if not out:
        raise FileFormatError(path, lines[0][0] if lines else 1, "no data rows")
    return np.asarray(out)


def _uniform_axis(path, values, lineno):
    axis = np.unique(values)
    if axis.size < 3:
        raise FileFormatError(path, lineno, "need at least 3 distinct node coordinates")
    steps = np.diff(axis)
    if np.ptp(steps) > 1e-8 * max(1.0, abs(axis).max()):
        raise FileFormatError(path, lineno, "node coordinates are not uniformly spaced")
    return axis


def _content_lines(path, text: str):
    """Non-empty lines with their numbers, plus the set of comment words seen."""
    lines, comments = [], []
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            comments.append(s[1:].strip().lower())
            continue
        lines.append((i, s))
    return lines, comments


def _field_from_lines(path, lines) -> Field:
    if not lines:
        raise FileFormatError(path, 1, "empty file")
    lineno, header = lines[0]
    cols = [c.strip().lower() for c in header.split(",")]
    if cols[:1] != ["x"] or len(cols) not in (2, 3) or (len(cols) == 3 and cols[1] != "y"):
        raise FileFormatError(path, lineno, f"unexpected header {header!r}")
    data = _parse_rows(path, lines[1:], len(cols))
    first = lines[1][0] if len(lines) > 1 else lineno
    if np.isnan(data).any():
        raise FileFormatError(path, first, "NaN values are not allowed")
    if len(cols) == 2:
        order = np.argsort(data[:, 0], kind="stable")
        xs = data[order, 0]
        axis = _uniform_axis(path, xs, first)
        if axis.size != xs.size:
            raise FileFormatError(path, first, "repeated node coordinates")
        grid = Grid(axis[0], axis[-1], axis.size)
        vals = data[order, 1]
    else:
        ax = _uniform_axis(path, data[:, 0], first)
        ay = _uniform_axis(path, data[:, 1], first)
        if ax.size * ay.size != data.shape[0]:
            raise FileFormatError(path, first, "rows do not form a full tensor grid")
        grid = Grid([ax[0], ay[0]], [ax[-1], ay[-1]], [ax.size, ay.size])
        ix = np.rint((data[:, 0] - ax[0]) / grid.h[0]).astype(int)
        iy = np.rint((data[:, 1] - ay[0]) / grid.h[1]).astype(int)
        vals = np.full(grid.shape, np.nan)
        vals[ix, iy] = data[:, 2]
        if np.isnan(vals).any():
            raise FileFormatError(path, first, "rows do not form a full tensor grid")
    try:
        return Field(grid, vals)
    except DomainError as err:
        raise FileFormatError(path, first, str(err)) from None


def read_field(path) -> Field:
    """Read a field file; a ``# convex`` marker is recorded in ``meta['convex']``."""
    text = Path(path).read_text()
    lines, comments = _content_lines(path, text)
    f = _field_from_lines(path, lines)
    return Field(f.grid, f.values, {"convex": "convex" in comments})


def read_potential(path) -> Potential:
    """Read a field file as a Potential (convexity is re-checked)."""
    f = read_field(path)
    try:
        return Potential(Field(f.grid, f.values))
    except DomainError as err:
        raise FileFormatError(path, 1, str(err)) from None


def write_measure(path, mu: Measure) -> Path:
    if isinstance(mu, AtomicMeasure):
        lines = ["atoms"]
        if mu.dim == 1:
            lines.append("x,weight")
            lines += [f"{_fmt(x)},{_fmt(w)}" for x, w in zip(mu.locations, mu.weights)]
        else:
            lines.append("x,y,weight")
            lines += [f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(w)}"
                      for p, w in zip(mu.locations, mu.weights)]
        return atomic_write(path, "\n".join(lines) + "\n")
    return atomic_write(path, "density\n" + "\n".join(_rows(mu.field, "value")) + "\n")


def read_measure(path) -> Measure:
    """Read a measure file. Density values and atom weights are renormalized."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise FileFormatError(path, 0, f"cannot read file: {err.strerror}") from None
    lines, _ = _content_lines(path, text)
    if not lines:
        raise FileFormatError(path, 1, "empty file")
    lineno, kind = lines[0]
    kind = kind.lower()
    body = lines[1:]
    if kind == "density":
        f = _field_from_lines(path, body)
        try:
            return Density.normalized(f)
        except (DomainError, ArithmeticError) as err:
            raise FileFormatError(path, body[0][0] if body else lineno, str(err)) from None
    if kind != "atoms":
        raise FileFormatError(path, lineno, "first line must be 'density' or 'atoms'")
    if not body:
        raise FileFormatError(path, lineno, "no atoms")
    hdr_no, hdr = body[0]
    cols = [c.strip().lower() for c in hdr.split(",")]
    if cols in (["x", "weight"], ["x", "y", "weight"]):
        body = body[1:]
        ncols = len(cols)
    else:
        ncols = len(cols)
        if ncols not in (2, 3):
            raise FileFormatError(path, hdr_no, "atoms need 2 or 3 columns")
    data = _parse_rows(path, body, ncols)
    w = data[:, -1]
    bad = np.nonzero(~(w > 0) | ~np.isfinite(data).all(axis=1))[0]
    if bad.size:
        raise FileFormatError(path, body[bad[0]][0], "atom weights must be positive and finite")
    loc = data[:, 0] if ncols == 2 else data[:, :2]
    return AtomicMeasure.merged(loc, w / w.sum())


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> Path:
    """CSV with ``# comment`` lines, a header row and one line per row."""
    buf = _io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return atomic_write(path, buf.getvalue())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(float(v)) if not math.isnan(v) else "nan"
    return str(v)


def read_table(path) -> tuple[list[str], list[list[str]], list[str]]:
    """Inverse of :func:`write_table`: ``(columns, rows, comments)`` as strings."""
    lines, comments = [], []
    for raw in Path(path).read_text().splitlines():
        if raw.startswith("#"):
            comments.append(raw[1:].strip())
        elif raw.strip():
            lines.append(raw.split(","))
    return lines[0], lines[1:], comments
