"""CSV interchange for sample batches and matrices.

Sample files hold one sample per row. Complex files have 2d columns
``re0,im0,...,re{d-1},im{d-1}``; real files have d columns. Lines starting
with ``#`` are comments and a non-numeric first row is taken as a header.
Floats are written with ``repr`` so files round-trip bit for bit.
"""

import numpy as np

from .errors import ParseError

__all__ = ["read_samples", "write_samples", "read_matrix", "write_matrix", "format_float"]


def format_float(v):
    return repr(float(v))


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _parse_rows(lines, source):
    rows = []
    header_allowed = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = [t.strip() for t in line.split(",")]
        if header_allowed and not all(_is_number(t) for t in toks):
            header_allowed = False
            continue
        header_allowed = False
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            raise ParseError(f"{source}: row {len(rows) + 1} (line {lineno}) has a non-numeric field")
        rows.append((lineno, vals))
    return rows


def read_samples(path, field="complex"):
    """Read an ``(N, d)`` batch; ``field`` is ``"complex"`` or ``"real"``."""
    if field not in ("complex", "real"):
        raise ParseError(f"unknown field {field!r}")
    with open(path) as fh:
        rows = _parse_rows(fh, path)
    if not rows:
        raise ParseError(f"{path}: no samples found")
    width = len(rows[0][1])
    out = []
    for i, (lineno, vals) in enumerate(rows, start=1):
        if field == "complex" and len(vals) % 2:
            raise ParseError(f"{path}: row {i} (line {lineno}) has an odd column count ({len(vals)})")
        if len(vals) != width:
            raise ParseError(
                f"{path}: row {i} (line {lineno}) has {len(vals)} columns, expected {width}")
        if not all(np.isfinite(vals)):
            raise ParseError(f"{path}: row {i} (line {lineno}) has a non-finite value")
        out.append(vals)
    A = np.array(out, dtype=float)
    if field == "complex":
        return A[:, 0::2] + 1j * A[:, 1::2]
    return A


def _complex_columns(M):
    M = np.asarray(M)
    out = np.empty(M.shape[:-1] + (2 * M.shape[-1],))
    out[..., 0::2] = M.real
    out[..., 1::2] = M.imag
    return out


def write_samples(path, X, comments=(), field=None):
    X = np.asarray(X)
    field = field or ("complex" if np.iscomplexobj(X) else "real")
    A = _complex_columns(X) if field == "complex" else np.real(X)
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        for row in A:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def write_matrix(path, M, comments=()):
    """Write a matrix with a one-line ``# d=.. field=..`` header."""
    M = np.asarray(M)
    field = "complex" if np.iscomplexobj(M) else "real"
    extra = " ".join(comments)
    with open(path, "w") as fh:
        fh.write(f"# d={M.shape[0]} field={field}" + (f" {extra}" if extra else "") + "\n")
        A = _complex_columns(M) if field == "complex" else M
        for row in A:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        first = fh.readline()
        meta = dict(tok.split("=", 1) for tok in first.lstrip("# ").split() if "=" in tok)
        rows = _parse_rows(fh, path)
    field = meta.get("field", "complex")
    A = np.array([v for _, v in rows], dtype=float)
    M = A[:, 0::2] + 1j * A[:, 1::2] if field == "complex" else A
    if "d" in meta and M.shape != (int(meta["d"]),) * 2:
        raise ParseError(f"{path}: matrix shape {M.shape} does not match header d={meta['d']}")
    return M
