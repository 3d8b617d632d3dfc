"""Text formats: field dumps, cross-section files and flat key-value files.

Floats are written with ``repr``, the shortest decimal string that reads
back to the same double, so every write/parse cycle is lossless.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..grid import ScalarField, build_grid

FIELD_HEADER = "# moment-solve field v1"


class FormatError(ValueError):
    def __init__(self, path, line: int | None, msg: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {msg}")
        self.path = path
        self.line = line


def _fmt(v: float) -> str:
    return repr(float(v))


def format_field_dump(u: ScalarField) -> str:
    g = u.grid
    lines = [
        FIELD_HEADER,
        f"dim {g.dim}",
        "n " + " ".join(str(n) for n in g.n),
        "bounds " + " ".join(f"{_fmt(lo)} {_fmt(hi)}" for lo, hi in zip(g.lo, g.hi)),
    ]
    rows = u.values.reshape(-1, g.n[-1])
    lines.extend(" ".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_field_dump(u: ScalarField, path) -> Path:
    path = Path(path)
    path.write_text(format_field_dump(u))
    return path


def _expect(path, lineno, line, key, count=None):
    parts = line.split()
    if not parts or parts[0] != key:
        raise FormatError(path, lineno, f"expected '{key} ...', found {line!r}")
    if count is not None and len(parts) - 1 != count:
        raise FormatError(path, lineno, f"'{key}' needs {count} values, found {len(parts) - 1}")
    return parts[1:]


def parse_field_dump(path) -> ScalarField:
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 4:
        raise FormatError(path, len(lines), "truncated header")
    if lines[0].strip() != FIELD_HEADER:
        raise FormatError(path, 1, f"unsupported header {lines[0]!r}, expected {FIELD_HEADER!r}")
    try:
        (dim_s,) = _expect(path, 2, lines[1], "dim", 1)
        dim = int(dim_s)
        if dim not in (2, 3):
            raise FormatError(path, 2, f"dim must be 2 or 3, got {dim}")
        n = [int(v) for v in _expect(path, 3, lines[2], "n", dim)]
        b = [float(v) for v in _expect(path, 4, lines[3], "bounds", 2 * dim)]
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(path, None, f"bad header value: {exc}") from None
    try:
        grid = build_grid(b[0::2], b[1::2], n, min_nodes=2)
    except ValueError as exc:
        raise FormatError(path, 3, str(exc)) from None
    body = lines[4:]
    n_rows = grid.size // grid.n[-1]
    if len(body) != n_rows:
        raise FormatError(path, 4 + len(body), f"expected {n_rows} value rows, found {len(body)}")
    values = np.empty((n_rows, grid.n[-1]))
    for r, line in enumerate(body):
        parts = line.split()
        if len(parts) != grid.n[-1]:
            raise FormatError(path, 5 + r, f"expected {grid.n[-1]} values, found {len(parts)}")
        try:
            values[r] = [float(p) for p in parts]
        except ValueError:
            raise FormatError(path, 5 + r, f"unparseable value in {line!r}") from None
    return ScalarField(grid, values.reshape(grid.shape))


def write_section(points: Iterable[tuple[float, float]], path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{_fmt(c)} {_fmt(v)}\n" for c, v in points))
    return path


def parse_section(path) -> list[tuple[float, float]]:
    path = Path(path)
    out = []
    for k, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(path, k, f"expected 'coordinate value', found {line!r}")
        out.append((float(parts[0]), float(parts[1])))
    return out


def section_name(case: str, axis: int, coordinate: float) -> str:
    return f"{case}_{'xyz'[axis]}{coordinate:g}.csv"


def parse_key_values(text: str, path="<string>") -> list[tuple[int, str, str]]:
    """``key = value`` lines with ``#`` comments; returns (line, key, value) in order."""
    out = []
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(path, k, f"expected 'key = value', found {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(path, k, "empty key")
        out.append((k, key, value))
    return out


def format_key_values(items: Sequence[tuple[str, object]]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items)
