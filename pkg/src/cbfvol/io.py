"""Reading and writing realized-covariance files and JSON reports.

An RcovFile is plain text: a header line ``#rcov v1 n=<n> T=<T>`` followed by
``T`` lines, each holding the ``n(n+1)/2`` entries of ``vech(Y_t)`` separated
by single spaces and written with Python's shortest round-trip ``repr``.
"""

import json
import logging
import re

import numpy as np

from .matalg import unvech, vech
from .validation import check_series

logger = logging.getLogger(__name__)

HEADER_RE = re.compile(r"^#rcov v(\d+) n=(\d+) T=(\d+)\s*$")
FORMAT_VERSION = 1
REPORT_SCHEMA = "cbfvol-report/1"


class RcovFormatError(ValueError):
    """An RcovFile is malformed."""


def write_rcov(path, Y):
    """Write a ``(T, n, n)`` series; the file round-trips exactly through :func:`read_rcov`."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 3 or Y.shape[1] != Y.shape[2]:
        raise ValueError(f"series must have shape (T, n, n), got {Y.shape}")
    T, n = Y.shape[0], Y.shape[1]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"#rcov v{FORMAT_VERSION} n={n} T={T}\n")
        for M in Y:
            fh.write(" ".join(repr(float(x)) for x in vech(M)) + "\n")


def read_rcov(path, ridge=0.0):
    """Load an RcovFile.

    Parameters
    ----------
    ridge : float, default 0
        When positive, ``ridge * I`` is added to every matrix before the
        positive-definiteness check (a repair for near-singular inputs).

    Returns
    -------
    ndarray, shape (T, n, n)
    """
    with open(path, encoding="ascii") as fh:
        header = fh.readline()
        m = HEADER_RE.match(header)
        if not m:
            raise RcovFormatError(f"{path}: bad header {header.strip()!r}")
        version, n, T = (int(g) for g in m.groups())
        if version != FORMAT_VERSION:
            raise RcovFormatError(f"{path}: unsupported format version {version}")
        d = n * (n + 1) // 2
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != d:
                raise RcovFormatError(f"{path}:{lineno}: expected {d} values, got {len(vals)}")
            rows.append([float(v) for v in vals])
    if len(rows) != T:
        raise RcovFormatError(f"{path}: header says T={T}, found {len(rows)} records")
    Y = np.array([unvech(r, n) for r in rows]).reshape(T, n, n)
    if ridge > 0:
        Y = Y + ridge * np.eye(n)
    return check_series(Y, name=str(path))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x):
            return None
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    """Write a report dict with the schema tag added; numpy values are converted."""
    doc = {"schema": REPORT_SCHEMA}
    doc.update(_jsonable(payload))
    text = json.dumps(doc, indent=2, sort_keys=False)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return doc


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"{path}: not a {REPORT_SCHEMA} document")
    return doc


def write_ratio_csv(path, eigenvalues, ratios):
    """Eigenvalue table with columns ``i, eigenvalue, ratio`` (ratio of i to i+1)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("i,eigenvalue,ratio\n")
        for i, lam in enumerate(eigenvalues, start=1):
            r = repr(float(ratios[i - 1])) if i - 1 < len(ratios) else ""
            fh.write(f"{i},{float(lam)!r},{r}\n")
