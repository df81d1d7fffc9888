"""Plain-text matrix format for fields and embedding tables.

The first line is ``n d`` (rows, columns); each following line holds one row
of whitespace-separated floats written with 17 significant digits, which is
enough for an exact float64 round trip.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def format_matrix(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {M.shape}")
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in M)
    return "\n".join(lines) + "\n"


def parse_matrix(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    try:
        n, d = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad header line {lines[0]!r}") from exc
    if len(lines) - 1 != n:
        raise ValueError(f"header says {n} rows, found {len(lines) - 1}")
    M = np.empty((n, d))
    for i, ln in enumerate(lines[1:]):
        vals = ln.split()
        if len(vals) != d:
            raise ValueError(f"row {i} has {len(vals)} values, expected {d}")
        M[i] = [float(v) for v in vals]
    return M


def save_matrix(path, M):
    Path(path).write_text(format_matrix(M))


def load_matrix(path):
    return parse_matrix(Path(path).read_text())
