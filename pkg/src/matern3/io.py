"""Point-pattern CSV files with an optional window header."""

import numpy as np

from .geometry import Window, as_locations

__all__ = ["PatternFormatError", "load_pattern", "write_pattern"]


class PatternFormatError(ValueError):
    """A point file could not be parsed; the message names the line."""


def _parse_window(fields, lineno):
    try:
        bounds = [float(v) for v in fields]
    except ValueError:
        raise PatternFormatError(f"line {lineno}: window bounds must be numbers") from None
    if len(bounds) not in (2, 4):
        raise PatternFormatError(f"line {lineno}: window needs 2 (interval) or 4 (rectangle) bounds")
    half = len(bounds) // 2
    try:
        return Window(bounds[:half], bounds[half:])
    except ValueError as err:
        raise PatternFormatError(f"line {lineno}: {err}") from None


def load_pattern(path, window=None):
    """Read ``x,y`` (or ``x``) rows into ``(locs, window)``.

    Lines starting with ``#`` are comments, except ``# window x0 y0 x1 y1``
    which declares the window. An explicit ``window`` argument wins over the
    header. A non-numeric first data row is taken as a column header.
    """
    header_window = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                fields = line[1:].replace(",", " ").split()
                if fields and fields[0].lower() == "window":
                    header_window = _parse_window(fields[1:], lineno)
                continue
            fields = [f.strip() for f in line.split(",")]
            try:
                values = [float(f) for f in fields]
            except ValueError:
                if not rows and all(f and not f[0].isdigit() and f[0] not in "+-." for f in fields):
                    continue
                raise PatternFormatError(f"line {lineno}: cannot parse {line!r} as coordinates") from None
            if rows and len(values) != len(rows[0][1]):
                raise PatternFormatError(f"line {lineno}: expected {len(rows[0][1])} coordinates, got {len(values)}")
            if not np.all(np.isfinite(values)):
                raise PatternFormatError(f"line {lineno}: non-finite coordinate")
            rows.append((lineno, values))
    window = window or header_window
    if window is None:
        raise PatternFormatError(f"{path}: no window header and no window given")
    if not rows:
        return np.zeros((0, window.dim)), window
    if len(rows[0][1]) != window.dim:
        raise PatternFormatError(
            f"line {rows[0][0]}: {len(rows[0][1])} coordinates but the window is {window.dim}-dimensional"
        )
    locs = as_locations([v for _, v in rows], window.dim)
    outside = np.flatnonzero(~window.contains(locs))
    if len(outside):
        lineno, values = rows[outside[0]]
        raise PatternFormatError(f"line {lineno}: point {tuple(values)} lies outside the window")
    return locs, window


def write_pattern(path, locs, window, columns=None, extra=None):
    """Write points with a window header; ``extra`` adds columns after the coordinates."""
    locs = as_locations(locs, window.dim)
    names = ["x", "y"][: window.dim]
    table = [locs]
    if extra:
        names += list(extra)
        table += [np.asarray(v, float).reshape(-1, 1) for v in extra.values()]
    bounds = " ".join(repr(float(v)) for v in np.concatenate([window.lower, window.upper]))
    with open(path, "w") as fh:
        fh.write(f"# window {bounds}\n")
        fh.write(",".join(columns or names) + "\n")
        for row in np.hstack(table) if len(locs) else []:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
