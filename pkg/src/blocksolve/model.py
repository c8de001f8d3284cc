"""Block-structured QP data model and KKT assembly.

The problem is::

    min  sum_i 1/2 x_i' D_i x_i + c_i' x_i
    s.t. J_i x_i = b_i              (lambda_i)
         A_i x_i + B_i z = 0        (y_i)

The compact primal-dual vector is ordered
``(x_1, lam_1, ..., x_P, lam_P, z, y_1, ..., y_P)``; ``v_i = (x_i, lam_i)``.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch, NotPositiveDefinite, SingularMatrix
from .sparse import SparseMatrix, as_sparse, factorize_spd, factorize_sym_indef


def _vec(v, n: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v if v is not None else [], dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


@dataclass(frozen=True)
class Partition:
    """Data ``{D, c, J, b, A, B}`` of one block. ``J`` may have zero rows."""

    D: SparseMatrix
    c: np.ndarray
    J: SparseMatrix
    b: np.ndarray
    A: SparseMatrix
    B: SparseMatrix

    @classmethod
    def build(cls, D, c, A, B, J=None, b=None) -> Partition:
        D = as_sparse(D, symmetric=True)
        nx = D.nrows
        J = SparseMatrix.zeros(0, nx) if J is None else as_sparse(J)
        A = as_sparse(A)
        B = as_sparse(B)
        part = cls(D, _vec(c, nx, "c"), J, _vec(b, J.nrows, "b"), A, B)
        part._check()
        return part

    def _check(self) -> None:
        nx = self.nx
        if self.J.ncols != nx or self.A.ncols != nx:
            raise DimensionMismatch("J and A must have n_x columns")
        if self.B.nrows != self.A.nrows:
            raise DimensionMismatch("A and B must have the same number of rows")
        if self.c.shape[0] != nx or self.b.shape[0] != self.J.nrows:
            raise DimensionMismatch("c or b has the wrong length")

    @property
    def nx(self) -> int:
        return self.D.nrows

    @property
    def m(self) -> int:
        return self.J.nrows

    @property
    def l(self) -> int:  # noqa: E743
        return self.A.nrows

    @property
    def nv(self) -> int:
        return self.nx + self.m

    @functools.cached_property
    def K(self) -> SparseMatrix:
        """``[[D, J'], [J, 0]]``."""
        return kkt_block(self.D, self.J)

    def K_rho(self, rho: float) -> SparseMatrix:
        """``[[D + rho A'A, J'], [J, 0]]``."""
        AtA = (self.A.csc.T @ self.A.csc).tocsc()
        D_rho = SparseMatrix(self.D.csc + rho * AtA, symmetric=True)
        return kkt_block(D_rho, self.J)

    @functools.cached_property
    def A_tilde(self) -> sp.csc_matrix:
        """``[A, 0]`` acting on ``v = (x, lam)``."""
        return sp.hstack([self.A.csc, sp.csc_matrix((self.l, self.m))], format="csc")

    @functools.cached_property
    def K_s(self) -> SparseMatrix:
        """Permuted partition block ``[[D, J', A'], [J, 0, 0], [A, 0, 0]]``."""
        cons = sp.vstack([self.J.csc, self.A.csc], format="csc")
        low = sp.bmat([[self.D.lower, None], [cons, sp.csc_matrix((self.m + self.l, self.m + self.l))]])
        return SparseMatrix(low, symmetric=True)

    @property
    def gamma(self) -> np.ndarray:
        return np.concatenate([-self.c, self.b])


def kkt_block(D: SparseMatrix, J: SparseMatrix) -> SparseMatrix:
    m = J.nrows
    low = sp.bmat([[D.lower, None], [J.csc, sp.csc_matrix((m, m))]], format="csc")
    return SparseMatrix(low, symmetric=True)


@dataclass(frozen=True)
class Layout:
    """Slices of the compact vector ``(v_1, ..., v_P, z, y_1, ..., y_P)``."""

    x: tuple[slice, ...]
    lam: tuple[slice, ...]
    v: tuple[slice, ...]
    z: slice
    y: tuple[slice, ...]
    y_all: slice
    v_all: slice
    dim: int


@dataclass(frozen=True)
class BlockQP:
    partitions: tuple[Partition, ...]
    nz: int

    def __post_init__(self):
        object.__setattr__(self, "partitions", tuple(self.partitions))
        if not self.partitions:
            raise DimensionMismatch("a BlockQP needs at least one partition")
        for i, p in enumerate(self.partitions):
            if p.B.ncols != self.nz:
                raise DimensionMismatch(f"B_{i} has {p.B.ncols} columns, expected n_z={self.nz}")

    @property
    def P(self) -> int:
        return len(self.partitions)

    @property
    def n(self) -> int:
        """Total primal variables ``n_z + sum n_x_i``."""
        return self.nz + sum(p.nx for p in self.partitions)

    @property
    def m(self) -> int:
        return sum(p.m for p in self.partitions)

    @property
    def l(self) -> int:  # noqa: E743
        return sum(p.l for p in self.partitions)

    @property
    def dim(self) -> int:
        return self.n + self.m + self.l

    @functools.cached_property
    def layout(self) -> Layout:
        xs, lams, vs, ys = [], [], [], []
        off = 0
        for p in self.partitions:
            xs.append(slice(off, off + p.nx))
            lams.append(slice(off + p.nx, off + p.nv))
            vs.append(slice(off, off + p.nv))
            off += p.nv
        v_all = slice(0, off)
        z = slice(off, off + self.nz)
        off += self.nz
        y0 = off
        for p in self.partitions:
            ys.append(slice(off, off + p.l))
            off += p.l
        return Layout(tuple(xs), tuple(lams), tuple(vs), z, tuple(ys), slice(y0, off), v_all, off)

    @functools.cached_property
    def rhs(self) -> np.ndarray:
        """``r = (gamma, 0, 0)`` with ``gamma_i = (-c_i, b_i)``."""
        r = np.zeros(self.dim)
        for p, s in zip(self.partitions, self.layout.v):
            r[s] = p.gamma
        return r

    @functools.cached_property
    def B_stack(self) -> sp.csc_matrix:
        return sp.vstack([p.B.csc for p in self.partitions], format="csc")

    @functools.cached_property
    def A_tilde(self) -> sp.csc_matrix:
        return sp.block_diag([p.A_tilde for p in self.partitions], format="csc")

    @functools.cached_property
    def kkt(self) -> KktSystem:
        return assemble_kkt(self)

    def objective(self, u: Iterate) -> float:
        total = 0.0
        for i, p in enumerate(self.partitions):
            x = u.x(i)
            total += 0.5 * x @ (p.D.csc @ x) + p.c @ x
        return float(total)


@dataclass
class Iterate:
    """Primal-dual point stored as one compact vector with per-block views."""

    qp: BlockQP = field(repr=False)
    vec: np.ndarray

    def __post_init__(self):
        self.vec = _vec(self.vec, self.qp.dim, "iterate")

    @classmethod
    def zeros(cls, qp: BlockQP) -> Iterate:
        return cls(qp, np.zeros(qp.dim))

    def x(self, i: int) -> np.ndarray:
        return self.vec[self.qp.layout.x[i]]

    def lam(self, i: int) -> np.ndarray:
        return self.vec[self.qp.layout.lam[i]]

    def y(self, i: int) -> np.ndarray:
        return self.vec[self.qp.layout.y[i]]

    @property
    def v(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.x(i), self.lam(i)) for i in range(self.qp.P)]

    @property
    def z(self) -> np.ndarray:
        return self.vec[self.qp.layout.z]

    def copy(self) -> Iterate:
        return Iterate(self.qp, self.vec.copy())


@dataclass(frozen=True)
class KktSystem:
    """Assembled KKT matrix (lower triangle stored) and right-hand side.

    ``perm`` is set for the Schur-permuted ordering: ``perm[k]`` is the
    compact index of permuted position ``k``.
    """

    H: SparseMatrix
    r: np.ndarray
    ordering: str
    rho: float | None = None
    perm: np.ndarray | None = None

    def to_compact(self, u_perm: np.ndarray) -> np.ndarray:
        if self.perm is None:
            return np.asarray(u_perm)
        out = np.empty_like(u_perm)
        out[self.perm] = u_perm
        return out


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    issues: list[tuple[int | None, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def messages(self) -> list[str]:
        return [msg if i is None else f"partition {i}: {msg}" for i, msg in self.issues]


def validate(qp: BlockQP) -> ValidationReport:
    """Check strong convexity and the rank conditions the solvers rely on."""
    report = ValidationReport()
    for i, p in enumerate(qp.partitions):
        try:
            factorize_spd(p.D)
        except NotPositiveDefinite:
            report.issues.append((i, "D not positive definite"))
            continue
        try:
            factorize_sym_indef(p.K_s)
        except SingularMatrix:
            report.issues.append((i, "K_s singular: [J; A] rank deficient"))
    sigma = (qp.B_stack.T @ qp.B_stack).toarray()
    try:
        factorize_spd(sigma)
    except NotPositiveDefinite:
        report.issues.append((None, "B rank deficient"))
    return report


# ---------------------------------------------------------------------------
# Assembly


def _coupling_lower(qp: BlockQP, rho: float) -> sp.csc_matrix:
    """Lower triangle of the (v, z, y) KKT matrix with penalty ``rho``."""
    nz, l = qp.nz, qp.l
    if rho:
        K = sp.block_diag([p.K_rho(rho).lower for p in qp.partitions], format="csc")
        B = qp.B_stack
        zv = rho * (B.T @ qp.A_tilde)
        zz = sp.tril(rho * (B.T @ B))
    else:
        K = sp.block_diag([p.K.lower for p in qp.partitions], format="csc")
        zv = None
        zz = sp.csc_matrix((nz, nz))
    return sp.bmat(
        [
            [K, None, None],
            [zv, zz, None],
            [qp.A_tilde, qp.B_stack, sp.csc_matrix((l, l))],
        ],
        format="csc",
    )


def assemble_kkt(qp: BlockQP) -> KktSystem:
    """Compact system ``H = [[K, 0, A'], [0, 0, B'], [A, B, 0]]``."""
    H = SparseMatrix(_coupling_lower(qp, 0.0), symmetric=True)
    return KktSystem(H, qp.rhs.copy(), "compact")


def assemble_regularized_kkt(qp: BlockQP, rho: float) -> KktSystem:
    """Augmented system ``H_rho``; ``rho = 0`` gives back ``H``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    H = SparseMatrix(_coupling_lower(qp, rho), symmetric=True)
    return KktSystem(H, qp.rhs.copy(), "regularized" if rho else "compact", rho=rho if rho else None)


def schur_permutation(qp: BlockQP) -> np.ndarray:
    """Compact indices in the order ``(x_1, lam_1, y_1, ..., y_P, z)``."""
    lay = qp.layout
    idx = []
    for i in range(qp.P):
        idx.append(np.arange(lay.v[i].start, lay.v[i].stop))
        idx.append(np.arange(lay.y[i].start, lay.y[i].stop))
    idx.append(np.arange(lay.z.start, lay.z.stop))
    return np.concatenate(idx).astype(np.int64)


def assemble_schur_permuted(qp: BlockQP) -> KktSystem:
    """System ``[[K_s, B_s], [B_s', 0]]`` with ``K_s = blkdiag(K_s_i)``."""
    Ks = sp.block_diag([p.K_s.lower for p in qp.partitions], format="csc")
    Bs = sp.vstack(
        [sp.vstack([sp.csc_matrix((p.nv, qp.nz)), p.B.csc]) for p in qp.partitions],
        format="csc",
    )
    low = sp.bmat([[Ks, None], [Bs.T, sp.csc_matrix((qp.nz, qp.nz))]], format="csc")
    perm = schur_permutation(qp)
    return KktSystem(SparseMatrix(low, symmetric=True), qp.rhs[perm], "schur-permuted", perm=perm)


def kkt_residual(qp: BlockQP, u: Iterate | np.ndarray) -> float:
    """``||H u - r||_2`` on the compact, unregularized system."""
    vec = u.vec if isinstance(u, Iterate) else np.asarray(u, dtype=float)
    if vec.shape[0] != qp.dim:
        raise DimensionMismatch(f"iterate has length {vec.shape[0]}, expected {qp.dim}")
    kkt = qp.kkt
    return float(np.linalg.norm(kkt.H.csc @ vec - kkt.r))


# ---------------------------------------------------------------------------
# JSON serialization


def _mat_to_json(m: SparseMatrix) -> dict:
    return {"nrows": m.nrows, "ncols": m.ncols, "triplets": m.triplets()}


def _mat_from_json(d: dict, symmetric: bool = False) -> SparseMatrix:
    return SparseMatrix.from_triplets(int(d["nrows"]), int(d["ncols"]), d["triplets"], symmetric)


def qp_to_dict(qp: BlockQP) -> dict:
    return {
        "n_z": qp.nz,
        "partitions": [
            {
                "D": _mat_to_json(p.D),
                "c": p.c.tolist(),
                "J": _mat_to_json(p.J),
                "b": p.b.tolist(),
                "A": _mat_to_json(p.A),
                "B": _mat_to_json(p.B),
            }
            for p in qp.partitions
        ],
    }


def qp_from_dict(d: dict) -> BlockQP:
    parts = []
    for pd in d["partitions"]:
        parts.append(
            Partition.build(
                D=_mat_from_json(pd["D"], symmetric=True),
                c=pd["c"],
                J=_mat_from_json(pd["J"]) if pd.get("J") else None,
                b=pd.get("b"),
                A=_mat_from_json(pd["A"]),
                B=_mat_from_json(pd["B"]),
            )
        )
    return BlockQP(tuple(parts), int(d["n_z"]))


def save_qp(qp: BlockQP, path: str | Path) -> None:
    Path(path).write_text(json.dumps(qp_to_dict(qp)))


def load_qp(path: str | Path) -> BlockQP:
    return qp_from_dict(json.loads(Path(path).read_text()))


def make_qp(partitions: Sequence[dict], nz: int) -> BlockQP:
    """Convenience constructor from dicts of arrays (``J``/``b`` optional)."""
    return BlockQP(tuple(Partition.build(**p) for p in partitions), nz)
