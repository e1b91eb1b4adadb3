"""Sparse graph storage, symmetric normalization and feature propagation.

Dense matrices throughout the package are plain ``float64`` numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GraphInputError(ValueError):
    """Malformed graph input (bad node id, shape mismatch, unparsable file)."""


@dataclass
class OpCounter:
    """Counts sparse-dense products so op budgets can be checked independently of wall time."""

    count: int = 0

    def add(self, n: int = 1) -> None:
        self.count += n


@dataclass(frozen=True)
class SparseAdjacency:
    """Symmetric n x n matrix in canonical CSR form (sorted, duplicate-free rows)."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _csr: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        csr = sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=(self.n, self.n)
        )
        object.__setattr__(self, "_csr", csr)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def check(self) -> None:
        """Raise ``AssertionError`` if any structural invariant is violated."""
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        assert len(rp) == self.n + 1 and rp[0] == 0
        assert np.all(np.diff(rp) >= 0)
        assert rp[-1] == len(ci) == len(v)
        assert np.all((ci >= 0) & (ci < self.n))
        for i in range(self.n):
            assert np.all(np.diff(ci[rp[i] : rp[i + 1]]) > 0)
        assert np.all(np.isfinite(v))
        dense = self.to_dense()
        assert np.array_equal(dense, dense.T)


def _from_coo(n: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> SparseAdjacency:
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return SparseAdjacency(
        n=n,
        row_ptr=row_ptr,
        col_idx=cols.astype(np.int64),
        values=vals.astype(np.float64),
    )


def build_from_edge_list(n: int, edges) -> SparseAdjacency:
    """Build an unweighted, symmetric adjacency from (i, j) pairs.

    Duplicates and both orientations of an edge collapse to one entry of
    value 1 per direction. Input self-loops are dropped; normalization adds
    them back.
    """
    if n < 1:
        raise GraphInputError(f"node count must be >= 1, got {n}")
    e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        bad = e[(e < 0).any(axis=1) | (e >= n).any(axis=1)][0]
        raise GraphInputError(f"edge {tuple(bad)} out of range for n={n}")
    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]])
    both = np.unique(both, axis=0)
    return _from_coo(n, both[:, 0], both[:, 1], np.ones(len(both)))


def sym_normalize(adj: SparseAdjacency) -> SparseAdjacency:
    """Return D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    n = adj.n
    rows = np.repeat(np.arange(n), np.diff(adj.row_ptr))
    loops = np.arange(n)
    rows = np.concatenate([rows, loops])
    cols = np.concatenate([adj.col_idx, loops])
    vals = np.concatenate([adj.values, np.ones(n)])
    deg = np.bincount(rows, weights=vals, minlength=n)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return _from_coo(n, rows, cols, vals * inv_sqrt[rows] * inv_sqrt[cols])


def spmm(adj: SparseAdjacency, x: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Sparse-dense product ``adj @ x``.

    Each output row accumulates its nonzeros in ascending column order, so
    results do not depend on thread count.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != adj.n:
        raise GraphInputError(f"spmm: adjacency is {adj.n}x{adj.n}, dense operand {x.shape}")
    if counter is not None:
        counter.add()
    return np.asarray(adj.to_scipy() @ x)


def propagate_chain(
    adj_norm: SparseAdjacency, x: np.ndarray, depth: int, counter: OpCounter | None = None
) -> list[np.ndarray]:
    """Return ``[X, ÂX, Â²X, ..., Â^depth X]`` using exactly ``depth`` sparse products."""
    if depth < 0:
        raise GraphInputError(f"depth must be >= 0, got {depth}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != adj_norm.n:
        raise GraphInputError(f"features have {x.shape[0]} rows, graph has {adj_norm.n} nodes")
    out = [x]
    for _ in range(depth):
        out.append(spmm(adj_norm, out[-1], counter))
    return out


def read_edge_list(path, n: int | None = None) -> list[tuple[int, int]]:
    """Parse a whitespace-separated edge file; ``#`` lines are comments."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split()
        if len(parts) != 2:
            raise GraphInputError(f"{path}:{lineno}: expected two node ids, got {s!r}")
        try:
            i, j = int(parts[0], 10), int(parts[1], 10)
        except ValueError:
            raise GraphInputError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
        if n is not None and not (0 <= i < n and 0 <= j < n):
            raise GraphInputError(f"{path}:{lineno}: node id out of range [0, {n})")
        edges.append((i, j))
    return edges


def write_edge_list(path, adj: SparseAdjacency) -> None:
    """Write each undirected edge once as ``i j`` with i < j."""
    lines = []
    for i in range(adj.n):
        for j in adj.col_idx[adj.row_ptr[i] : adj.row_ptr[i + 1]]:
            if i < j:
                lines.append(f"{i} {j}\n")
    Path(path).write_text("".join(lines), encoding="utf-8", newline="\n")
