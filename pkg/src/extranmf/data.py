"""Synthetic data, random initializations and matrix file formats.

Random streams come from numpy's counter-based Philox bit generator seeded
through :class:`numpy.random.SeedSequence`. Matrices are filled row-major,
W before H, with uniform samples on [0, 1).

On disk, dense matrices are headerless CSV and sparse matrices are
MatrixMarket ``coordinate real general``. Floats are written with
``repr`` (shortest round-trippable text), so round trips are lossless.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import linalg

__all__ = [
    "DatasetSpec",
    "ParseError",
    "UnsupportedFormat",
    "gen_fullrank",
    "gen_lowrank",
    "gen_lowrank_factors",
    "load_dataset",
    "random_init",
    "read_dense",
    "read_matrix",
    "read_matrix_market",
    "rng_for",
    "write_dense",
    "write_matrix_market",
    "write_run_csv",
]


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path is not None else ""
        where += f"{line}: " if line is not None else (": " if where else "")
        super().__init__(where + message)
        self.line = line
        self.path = path


class UnsupportedFormat(ParseError):
    pass


STREAM_LOWRANK = 1
STREAM_FULLRANK = 2
STREAM_INIT = 3


def rng_for(seed: int | Sequence[int], stream: int = 0) -> np.random.Generator:
    """Generator on a Philox stream derived from ``seed`` (int or int tuple).

    ``stream`` separates purposes so that data and initializations drawn
    with the same seed are independent.
    """
    entropy = [int(s) for s in seed] if isinstance(seed, (tuple, list)) else int(seed)
    ss = np.random.SeedSequence(entropy, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def gen_lowrank_factors(m: int, n: int, r: int, seed) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= r <= min(m, n):
        raise ValueError(f"need 1 <= r <= min(m, n), got r={r}, m={m}, n={n}")
    rng = rng_for(seed, STREAM_LOWRANK)
    W = rng.random((m, r))
    H = rng.random((r, n))
    return W, H


def gen_lowrank(m: int, n: int, r: int, seed) -> np.ndarray:
    """``X = W H`` with W (m x r) and H (r x n) uniform on [0, 1)."""
    W, H = gen_lowrank_factors(m, n, r, seed)
    return W @ H


def gen_fullrank(m: int, n: int, seed) -> np.ndarray:
    """X with i.i.d. uniform [0, 1) entries."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    return rng_for(seed, STREAM_FULLRANK).random((m, n))


def random_init(m: int, n: int, r: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Initial ``(W0, H0)`` uniform on [0, 1), deterministic per seed."""
    if min(m, n, r) < 1:
        raise ValueError("dimensions must be positive")
    rng = rng_for(seed, STREAM_INIT)
    W0 = rng.random((m, r))
    H0 = rng.random((r, n))
    return W0, H0


@dataclass(frozen=True)
class DatasetSpec:
    """``kind`` is ``lowrank``, ``fullrank`` or ``file``."""

    kind: str
    m: int = 200
    n: int = 200
    r: int = 20
    path: str | None = None
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.kind not in ("lowrank", "fullrank", "file"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file datasets need a path")
        if min(self.m, self.n, self.r) < 1:
            raise ValueError("dimensions must be positive")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "file":
            return Path(self.path).stem
        return f"{self.kind}{self.m}x{self.n}r{self.r}s{self.seed}"


def load_dataset(spec: DatasetSpec, seed=None):
    """Materialize ``spec``; ``seed`` overrides ``spec.seed`` for generators."""
    s = spec.seed if seed is None else seed
    if spec.kind == "lowrank":
        return gen_lowrank(spec.m, spec.n, spec.r, s)
    if spec.kind == "fullrank":
        return gen_fullrank(spec.m, spec.n, s)
    return read_matrix(spec.path)


def read_matrix(path):
    """Dispatch on extension: ``.mtx`` is MatrixMarket, anything else dense CSV."""
    if str(path).endswith(".mtx"):
        return read_matrix_market(path)
    return read_dense(path)


# -- MatrixMarket ------------------------------------------------------------------


def read_matrix_market(path) -> sp.csr_matrix:
    """Read a ``coordinate real general`` MatrixMarket file into CSR.

    Indices are converted from 1-based to 0-based; duplicate entries are
    rejected.
    """
    path = Path(path)
    with open(path, "r", encoding="ascii") as fh:
        lines = iter(enumerate(fh, start=1))
        try:
            lineno, banner = next(lines)
        except StopIteration:
            raise ParseError("empty file", None, path) from None
        tokens = banner.split()
        if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
            raise ParseError("missing %%MatrixMarket banner", lineno, path)
        obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise UnsupportedFormat(f"unsupported object/format {obj} {fmt}", lineno, path)
        if field not in ("real", "integer", "double"):
            raise UnsupportedFormat(f"unsupported field {field!r}", lineno, path)
        if symmetry != "general":
            raise UnsupportedFormat(f"unsupported symmetry {symmetry!r}", lineno, path)

        size = None
        for lineno, line in lines:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            parts = s.split()
            if len(parts) != 3:
                raise ParseError("size line must be 'rows cols nnz'", lineno, path)
            try:
                size = tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(f"bad size line {s!r}", lineno, path) from None
            break
        if size is None:
            raise ParseError("missing size line", None, path)
        m, n, nnz = size
        if m < 1 or n < 1 or nnz < 0:
            raise ParseError(f"invalid dimensions {size}", lineno, path)

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for lineno, line in lines:
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            if k >= nnz:
                raise ParseError(f"more than {nnz} entries", lineno, path)
            parts = s.split()
            if len(parts) != 3:
                raise ParseError("entry must be 'row col value'", lineno, path)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"bad entry {s!r}", lineno, path) from None
            if not (1 <= i <= m and 1 <= j <= n):
                raise ParseError(f"index ({i}, {j}) out of range", lineno, path)
            if not math.isfinite(v):
                raise ParseError("non-finite value", lineno, path)
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise ParseError(f"expected {nnz} entries, found {k}", None, path)

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if nnz > 1:
        dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
        if np.any(dup):
            i = int(np.flatnonzero(dup)[0])
            raise ParseError(f"duplicate entry ({rows[i] + 1}, {cols[i] + 1})", None, path)
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=indptr[1:])
    return sp.csr_matrix((vals, cols, indptr), shape=(m, n))


def write_matrix_market(path, X) -> None:
    """Write ``X`` (sparse or dense) as ``coordinate real general``; every stored entry is kept."""
    X = linalg.as_sparse(X) if sp.issparse(X) else sp.csr_matrix(np.asarray(X, dtype=np.float64))
    X = X.tocoo()
    order = np.lexsort((X.col, X.row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{X.shape[0]} {X.shape[1]} {X.nnz}\n")
        for i, j, v in zip(X.row[order], X.col[order], X.data[order]):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


# -- dense CSV ---------------------------------------------------------------------


def read_dense(path) -> np.ndarray:
    """Read a headerless CSV of floats; raises ParseError on empty or ragged input."""
    path = Path(path)
    rows = []
    width = None
    with open(path, "r", newline="", encoding="ascii") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                raise ParseError("blank row", lineno, path)
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(
                    f"row {lineno} has {len(fields)} fields, expected {width}", lineno, path
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ParseError(f"row {lineno} has a non-numeric field", lineno, path) from None
    if not rows:
        raise ParseError("empty file", None, path)
    A = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise ParseError("non-finite value", None, path)
    return A


def write_dense(path, A) -> None:
    A = linalg.as_dense(A)
    with open(path, "w", newline="", encoding="ascii") as fh:
        for row in A:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


# -- run telemetry -------------------------------------------------------------------

RUN_CSV_HEADER = ("iter", "elapsed_s", "rel_err", "E", "beta", "restarted")


def write_run_csv(path, history, e_min: float = 0.0, timings: bool = True) -> None:
    """Per-iteration telemetry CSV.

    ``history`` is a sequence of :class:`~extranmf.engine.IterationRecord`.
    With ``timings=False`` the ``elapsed_s`` column is left empty so that
    the file is a pure function of the (deterministic) iterates.
    """
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_CSV_HEADER)
        for h in history:
            w.writerow(
                (
                    h.iteration,
                    repr(float(h.elapsed)) if timings else "",
                    repr(float(h.rel_error)),
                    repr(float(h.rel_error - e_min)),
                    repr(float(h.beta)),
                    int(h.restarted),
                )
            )
