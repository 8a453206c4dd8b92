"""Bit-stable text formats for matrices, observations, results, manifests.

Matrices are plain text: a `rows cols` header line, then one line per row
of space-separated values printed with 17 significant digits, which makes
the write/read round trip bit-exact at double precision.  Result tables
are CSV with fixed headers and rows sorted by their key columns, so equal
inputs always produce byte-identical files.  All writers stage to a
temporary file and rename, leaving no partial outputs behind.
"""

import hashlib
import json
import os

import numpy as np

from .problem import ObservationSet

__all__ = [
    "FileFormatError",
    "write_matrix",
    "read_matrix",
    "write_observations",
    "read_observations",
    "write_results",
    "write_manifest",
    "read_manifest",
    "file_digest",
    "PHASE_COLUMNS",
    "CONVERGE_COLUMNS",
    "SOLVE_COLUMNS",
]

# 17 significant decimal digits: enough to round-trip any finite double.
_FLOAT_FMT = "{:.16e}"

PHASE_COLUMNS = (
    "dataset", "d", "n", "r", "multiple", "samples", "trials", "successes",
    "success_rate",
)
CONVERGE_COLUMNS = (
    "dataset", "p", "algo", "trial", "pass", "log2_rel_err", "rel_err", "dist",
)
SOLVE_COLUMNS = (
    "epoch", "passes", "rel_err", "dist", "objective", "projection_activations",
)

# columns used to sort each table kind (all of its key columns, in order)
_SORT_KEYS = {
    "phase": ("dataset", "d", "n", "r", "multiple"),
    "converge": ("dataset", "p", "algo", "trial", "pass"),
    "solve": ("epoch",),
}
_TABLE_COLUMNS = {
    "phase": PHASE_COLUMNS,
    "converge": CONVERGE_COLUMNS,
    "solve": SOLVE_COLUMNS,
}


class FileFormatError(ValueError):
    """A file deviated from its documented schema."""


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _format_value(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return _FLOAT_FMT.format(float(x))


def write_matrix(a, path):
    """Write a matrix in the `rows cols` + row-per-line text format."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(_FLOAT_FMT.format(x) for x in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_matrix(path):
    """Read the text matrix format back; errors name the offending line."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FileFormatError(f"{path}: line 1: empty file")
    header = lines[0].split()
    if len(header) != 2:
        raise FileFormatError(f"{path}: line 1: expected 'rows cols' header")
    try:
        rows, cols = int(header[0]), int(header[1])
    except ValueError:
        raise FileFormatError(f"{path}: line 1: non-integer header fields")
    if rows < 1 or cols < 1:
        raise FileFormatError(f"{path}: line 1: dimensions must be positive")
    if len(lines) - 1 > rows:
        raise FileFormatError(f"{path}: line {rows + 2}: more rows than the header declares")
    if len(lines) - 1 < rows:
        raise FileFormatError(f"{path}: line {len(lines) + 1}: fewer rows than the header declares")
    out = np.empty((rows, cols))
    for i, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if len(tokens) != cols:
            raise FileFormatError(f"{path}: line {i}: expected {cols} values, got {len(tokens)}")
        try:
            out[i - 2] = [float(tok) for tok in tokens]
        except ValueError:
            raise FileFormatError(f"{path}: line {i}: non-numeric token")
    if not np.all(np.isfinite(out)):
        raise FileFormatError(f"{path}: matrix contains non-finite values")
    return out


def write_observations(omega, path):
    """Write an observation set: `d1 d2 count` header, then `i j value` lines."""
    lines = [f"{omega.shape[0]} {omega.shape[1]} {omega.size}"]
    for i, j, x in zip(omega.rows, omega.cols, omega.values):
        lines.append(f"{i} {j} " + _FLOAT_FMT.format(x))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_observations(path):
    """Read an observation file back into an ObservationSet."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FileFormatError(f"{path}: line 1: empty file")
    header = lines[0].split()
    if len(header) != 3:
        raise FileFormatError(f"{path}: line 1: expected 'd1 d2 count' header")
    try:
        d1, d2, count = (int(tok) for tok in header)
    except ValueError:
        raise FileFormatError(f"{path}: line 1: non-integer header fields")
    if len(lines) - 1 != count:
        raise FileFormatError(
            f"{path}: line {min(len(lines), count) + 1}: expected {count} entries, got {len(lines) - 1}"
        )
    rows = np.empty(count, dtype=int)
    cols = np.empty(count, dtype=int)
    values = np.empty(count)
    for k, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if len(tokens) != 3:
            raise FileFormatError(f"{path}: line {k}: expected 'i j value'")
        try:
            rows[k - 2], cols[k - 2] = int(tokens[0]), int(tokens[1])
            values[k - 2] = float(tokens[2])
        except ValueError:
            raise FileFormatError(f"{path}: line {k}: non-numeric token")
    order = np.argsort(rows * d2 + cols)
    return ObservationSet(
        shape=(d1, d2), rows=rows[order], cols=cols[order], values=values[order]
    )


def write_results(rows, path, kind):
    """Write a result table as CSV with a fixed header and sorted rows.

    ``kind`` selects the schema: "phase", "converge", or "solve".  Rows are
    sorted by every key column so output bytes depend only on content.
    """
    try:
        columns = _TABLE_COLUMNS[kind]
    except KeyError:
        raise ValueError(f"unknown table kind {kind!r}; expected one of {sorted(_TABLE_COLUMNS)}")
    keys = _SORT_KEYS[kind]
    for row in rows:
        missing = [c for c in columns if c not in row]
        if missing:
            raise ValueError(f"result row missing columns {missing}")
    ordered = sorted(rows, key=lambda row: tuple(row[k] for k in keys))
    lines = [",".join(columns)]
    for row in ordered:
        lines.append(",".join(
            str(row[c]) if isinstance(row[c], str) else _format_value(row[c])
            for c in columns
        ))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(manifest, path):
    """Serialize a run manifest as canonical (sorted-key) JSON."""
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def file_digest(path):
    """Hex SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
