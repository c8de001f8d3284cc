"""Sparse matrix container and factorization backends.

Every solver touches linear algebra only through this module:

* :class:`SparseMatrix` wraps a compressed-column matrix and tracks a
  symmetry flag (symmetric matrices keep only their lower triangle).
* :func:`factorize_sym_indef` produces a Bunch-Kaufman ``LDL^T`` factorization
  (LAPACK ``sytrf``) for small blocks or a sparse LU for large ones.
* :func:`factorize_spd` produces a Cholesky factorization.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .exceptions import DimensionMismatch, NotPositiveDefinite, SingularMatrix

# A pivot is treated as zero when |pivot| <= PIVOT_TOL * max|entry|.
PIVOT_TOL = 1e-12
# Matrices larger than this go to the sparse backend under backend="auto".
DENSE_MAX_DIM = 1500
# Tolerance for accepting an input as symmetric (relative to max |entry|).
_SYM_TOL = 1e-12


class SparseMatrix:
    """Immutable real sparse matrix with compressed-column storage.

    Duplicate ``(row, col)`` entries are summed at construction. When
    ``symmetric`` is set the matrix must be square and only the lower
    triangle is stored; :attr:`csc` always returns the full matrix.
    """

    def __init__(self, data, symmetric: bool = False):
        if isinstance(data, SparseMatrix):
            mat = data.csc
        else:
            mat = data
        mat = sp.csc_matrix(mat, dtype=float)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        if symmetric:
            if mat.shape[0] != mat.shape[1]:
                raise DimensionMismatch(f"symmetric matrix must be square, got {mat.shape}")
            upper = sp.triu(mat, k=1)
            if upper.nnz:
                scale = max(abs(mat).max(), 1.0) if mat.nnz else 1.0
                gap = abs(mat - mat.T)
                if gap.nnz and gap.max() > _SYM_TOL * scale:
                    raise ValueError("matrix flagged symmetric is not symmetric")
            mat = sp.tril(mat, format="csc")
            mat.sort_indices()
        self._stored = mat
        self.symmetric = bool(symmetric)

    @classmethod
    def from_triplets(
        cls,
        nrows: int,
        ncols: int,
        triplets: Iterable[Sequence[float]],
        symmetric: bool = False,
    ) -> SparseMatrix:
        trip = np.asarray(list(triplets), dtype=float).reshape(-1, 3)
        rows = trip[:, 0].astype(np.int64)
        cols = trip[:, 1].astype(np.int64)
        if len(rows) and (
            rows.min() < 0 or cols.min() < 0 or rows.max() >= nrows or cols.max() >= ncols
        ):
            raise DimensionMismatch("triplet index out of range")
        coo = sp.coo_matrix((trip[:, 2], (rows, cols)), shape=(nrows, ncols))
        return cls(coo, symmetric=symmetric)

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> SparseMatrix:
        return cls(sp.identity(n, format="csc") * scale, symmetric=True)

    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> SparseMatrix:
        return cls(sp.csc_matrix((nrows, ncols)))

    @property
    def shape(self) -> tuple[int, int]:
        return self._stored.shape

    @property
    def nrows(self) -> int:
        return self._stored.shape[0]

    @property
    def ncols(self) -> int:
        return self._stored.shape[1]

    @property
    def nnz(self) -> int:
        """Number of stored entries (lower triangle only when symmetric)."""
        return self._stored.nnz

    @property
    def lower(self) -> sp.csc_matrix:
        """The stored matrix (lower triangle if symmetric)."""
        return self._stored

    @functools.cached_property
    def csc(self) -> sp.csc_matrix:
        """Full matrix in CSC form."""
        if not self.symmetric:
            return self._stored
        low = self._stored
        diag = sp.diags(low.diagonal())
        full = (low + low.T - diag).tocsc()
        full.sort_indices()
        return full

    @functools.cached_property
    def csr(self) -> sp.csr_matrix:
        return self.csc.tocsr()

    @property
    def T(self) -> SparseMatrix:
        if self.symmetric:
            return self
        return SparseMatrix(self._stored.T)

    def toarray(self) -> np.ndarray:
        return self.csc.toarray()

    def triplets(self) -> list[list[float]]:
        """Full-pattern ``[row, col, value]`` triplets in column-major order."""
        coo = self.csc.tocoo()
        return [[int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)]

    def max_abs(self) -> float:
        return float(abs(self._stored).max()) if self._stored.nnz else 0.0

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            return spmv(self, other)
        return NotImplemented

    def __repr__(self) -> str:
        tag = ", symmetric" if self.symmetric else ""
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}{tag})"


def as_sparse(m, symmetric: bool = False) -> SparseMatrix:
    if isinstance(m, SparseMatrix) and m.symmetric == symmetric:
        return m
    return SparseMatrix(m, symmetric=symmetric)


def spmv(m: SparseMatrix, x: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Return ``m @ x`` or ``m.T @ x``."""
    x = np.asarray(x, dtype=float)
    expected = m.nrows if transpose else m.ncols
    if x.shape[0] != expected:
        raise DimensionMismatch(f"vector of length {x.shape[0]} for operand of shape {m.shape}")
    if transpose and not m.symmetric:
        return m.csr.T @ x
    return m.csc @ x


def block_diag(blocks: Sequence[SparseMatrix]) -> SparseMatrix:
    """Block-diagonal concatenation with independent row/column offsets."""
    symmetric = all(b.symmetric for b in blocks) and len(blocks) > 0
    if not blocks:
        return SparseMatrix.zeros(0, 0)
    mats = [b.lower if symmetric else b.csc for b in blocks]
    return SparseMatrix(sp.block_diag(mats, format="csc"), symmetric=symmetric)


# ---------------------------------------------------------------------------
# Factorizations


@dataclass(frozen=True)
class SymIndefFactorization:
    """Factorization of a symmetric indefinite matrix.

    ``inertia`` is ``(n_pos, n_neg, n_zero)`` for the dense Bunch-Kaufman
    backend and ``None`` for the sparse LU backend.
    """

    dim: int
    backend: str
    inertia: tuple[int, int, int] | None
    _handle: object = field(repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_factored(self, rhs)


@dataclass(frozen=True)
class SpdFactorization:
    """Cholesky factorization of a symmetric positive definite matrix."""

    dim: int
    _handle: object = field(repr=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve_factored(self, rhs)


def _to_dense_symmetric(m) -> np.ndarray:
    if isinstance(m, SparseMatrix):
        if not m.symmetric:
            raise ValueError("expected a matrix with the symmetric flag set")
        return m.toarray()
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def _bk_pivot_blocks(ldu: np.ndarray, ipiv: np.ndarray) -> list[np.ndarray]:
    """Split the block-diagonal factor of a lower ``sytrf`` result."""
    n = ldu.shape[0]
    blocks = []
    k = 0
    while k < n:
        if ipiv[k] > 0:
            blocks.append(ldu[k : k + 1, k : k + 1].copy())
            k += 1
        else:
            d = np.array([[ldu[k, k], ldu[k + 1, k]], [ldu[k + 1, k], ldu[k + 1, k + 1]]])
            blocks.append(d)
            k += 2
    return blocks


def factorize_sym_indef(m, backend: str = "auto") -> SymIndefFactorization:
    """Factorize a symmetric (possibly indefinite) matrix.

    Args:
        m: symmetric :class:`SparseMatrix` or dense square array.
        backend: ``"dense"`` (Bunch-Kaufman via LAPACK), ``"sparse"``
            (SuperLU), or ``"auto"`` to choose by dimension.

    Raises:
        SingularMatrix: a pivot falls below ``PIVOT_TOL * max|entry|``.
    """
    n = m.shape[0]
    if backend == "auto":
        backend = "dense" if n <= DENSE_MAX_DIM else "sparse"
    if n == 0:
        return SymIndefFactorization(0, backend, (0, 0, 0), None)

    if backend == "sparse":
        mat = m.csc if isinstance(m, SparseMatrix) else sp.csc_matrix(m)
        scale = float(abs(mat).max()) if mat.nnz else 0.0
        if scale == 0.0:
            raise SingularMatrix("zero matrix")
        try:
            lu = spla.splu(mat, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        udiag = np.abs(lu.U.diagonal())
        if udiag.min() <= PIVOT_TOL * scale:
            raise SingularMatrix(f"pivot {udiag.min():.3e} below tolerance")
        return SymIndefFactorization(n, "sparse", None, lu)

    if backend != "dense":
        raise ValueError(f"unknown backend {backend!r}")
    a = _to_dense_symmetric(m)
    scale = float(np.abs(a).max())
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    ldu, ipiv, info = lapack.dsytrf(a, lower=1)
    if info < 0:
        raise ValueError(f"dsytrf: illegal argument {-info}")
    npos = nneg = nzero = 0
    for d in _bk_pivot_blocks(ldu, ipiv):
        eig = np.linalg.eigvalsh(d)
        if np.abs(eig).min() <= PIVOT_TOL * scale:
            raise SingularMatrix(f"pivot {np.abs(eig).min():.3e} below tolerance")
        npos += int((eig > 0).sum())
        nneg += int((eig < 0).sum())
    return SymIndefFactorization(n, "dense", (npos, nneg, nzero), (ldu, ipiv))


def factorize_spd(m) -> SpdFactorization:
    """Cholesky-factorize a symmetric positive definite matrix.

    Raises:
        NotPositiveDefinite: some pivot is ``<= PIVOT_TOL * max|entry|``.
    """
    a = _to_dense_symmetric(m)
    n = a.shape[0]
    if n == 0:
        return SpdFactorization(0, None)
    scale = float(np.abs(a).max())
    if scale == 0.0:
        raise NotPositiveDefinite("zero matrix")
    try:
        c, low = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = np.diag(c) ** 2
    if pivots.min() <= PIVOT_TOL * scale:
        raise NotPositiveDefinite(f"pivot {pivots.min():.3e} below tolerance")
    return SpdFactorization(n, (c, low))


def solve_factored(f: SymIndefFactorization | SpdFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve with a cached factorization; ``rhs`` may hold several columns."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != f.dim:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, factorization has {f.dim}")
    if f.dim == 0:
        return rhs.copy()
    if isinstance(f, SpdFactorization):
        return scipy.linalg.cho_solve(f._handle, rhs)
    if f.backend == "sparse":
        return f._handle.solve(rhs)
    ldu, ipiv = f._handle
    x, info = lapack.dsytrs(ldu, ipiv, rhs, lower=1)
    if info != 0:
        raise ValueError(f"dsytrs failed with info={info}")
    return x


# ---------------------------------------------------------------------------
# MatrixMarket exchange


def write_matrix_market(path: str | Path, m) -> None:
    """Write a matrix (sparse or dense) in MatrixMarket coordinate format."""
    if isinstance(m, SparseMatrix):
        data = m.lower if m.symmetric else m.csc
        scipy.io.mmwrite(str(path), sp.coo_matrix(data), symmetry="symmetric" if m.symmetric else "general", precision=17)
    else:
        scipy.io.mmwrite(str(path), sp.coo_matrix(np.asarray(m, dtype=float)), precision=17)


def read_matrix_market(path: str | Path) -> SparseMatrix:
    mat = scipy.io.mmread(str(path))
    info = scipy.io.mminfo(str(path))
    return SparseMatrix(mat, symmetric=info[5] == "symmetric")
