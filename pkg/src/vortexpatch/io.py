"""Binary field dumps and commented CSV outputs."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgument

MAGIC = b"VPL1"
# magic, nx, ny (uint32), h, origin_x, origin_y (float64), all little-endian
HEADER = struct.Struct("<4sIIddd")


class DumpFormatError(InvalidArgument):
    pass


def write_dump(path, grid, field):
    field = grid.check_field(field, "field")
    data = np.where(grid.mask, field, 0.0)
    header = HEADER.pack(MAGIC, grid.nx, grid.ny, grid.h, grid.origin[0], grid.origin[1])
    with open(path, "wb") as fh:
        fh.write(header)
        # rows of constant y, x varying fastest
        fh.write(np.ascontiguousarray(data.T).astype("<f8").tobytes())


def read_dump(path):
    """Return ``(values, nx, ny, h, origin)`` with ``values`` indexed ``[i, j]``."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DumpFormatError(f"cannot read dump {path}: {exc.strerror}") from exc
    if len(raw) < HEADER.size:
        raise DumpFormatError(f"dump {path} is shorter than its {HEADER.size}-byte header")
    magic, nx, ny, h, ox, oy = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DumpFormatError(f"dump {path} has bad magic bytes {magic!r}, expected {MAGIC!r}")
    expected = HEADER.size + 8 * nx * ny
    if len(raw) != expected:
        raise DumpFormatError(f"dump {path} holds {len(raw)} bytes, header implies {expected}")
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(ny, nx).T.astype(float)
    return values, nx, ny, h, (ox, oy)


def load_field(path, grid):
    """Read a dump and check it was written on a grid matching ``grid``."""
    values, nx, ny, h, origin = read_dump(path)
    if (nx, ny) != grid.shape or not np.isclose(h, grid.h, rtol=1e-12, atol=0) or not np.allclose(
        origin, grid.origin, rtol=0, atol=1e-12 * max(1.0, abs(grid.h))
    ):
        raise DumpFormatError(
            f"dump {path} is on a {nx}x{ny} grid (h={h:g}), configured grid is "
            f"{grid.nx}x{grid.ny} (h={grid.h:g})"
        )
    return np.where(grid.mask, values, 0.0)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, header=""):
    """CSV with a ``#``-prefixed comment block in front of the column row."""
    with open(path, "w", newline="") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n" if line else "#\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Rows of a commented CSV as dicts of strings."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_text(path, pairs, header=""):
    with open(path, "w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n" if line else "#\n")
        for key, value in pairs:
            fh.write(f"{key} = {_fmt(value)}\n")
