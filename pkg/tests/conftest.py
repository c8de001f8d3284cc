import numpy as np
import pytest

from blocksolve.model import BlockQP, Partition, make_qp


def tiny_partition() -> Partition:
    # min x^2 - 2x  s.t.  x - z = 0
    return Partition.build(D=[[2.0]], c=[-2.0], A=[[1.0]], B=[[-1.0]])


@pytest.fixture
def tiny_qp() -> BlockQP:
    return BlockQP((tiny_partition(),), 1)


@pytest.fixture
def tiny_qp2() -> BlockQP:
    return BlockQP((tiny_partition(), tiny_partition()), 1)


def dense_kkt(qp: BlockQP, rho: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Oracle: assemble H_rho and r entry by entry from the raw partition data."""
    nv = sum(p.nx + p.m for p in qp.partitions)
    nz, l = qp.nz, sum(p.l for p in qp.partitions)
    dim = nv + nz + l
    H = np.zeros((dim, dim))
    r = np.zeros(dim)
    ov, oy = 0, nv + nz
    zs = slice(nv, nv + nz)
    for p in qp.partitions:
        D, J, A, B = (m.toarray() for m in (p.D, p.J, p.A, p.B))
        xs = slice(ov, ov + p.nx)
        ls = slice(ov + p.nx, ov + p.nx + p.m)
        ys = slice(oy, oy + p.l)
        H[xs, xs] = D + rho * A.T @ A
        H[ls, xs] = J
        H[xs, ls] = J.T
        H[ys, xs] = A
        H[xs, ys] = A.T
        H[ys, zs] = B
        H[zs, ys] = B.T
        H[zs, xs] = rho * B.T @ A
        H[xs, zs] = rho * A.T @ B
        H[zs, zs] += rho * B.T @ B
        r[xs] = -p.c
        r[ls] = p.b
        ov += p.nx + p.m
        oy += p.l
    return H, r


def small_qp(P=2, nx=5, nz=2, m=1, seed=0) -> BlockQP:
    """Random instance with A_i selecting the first nz variables."""
    rng = np.random.default_rng(seed)
    parts = []
    for _ in range(P):
        G = rng.standard_normal((nx, nx))
        parts.append(
            dict(
                D=G @ G.T + np.eye(nx),
                c=rng.standard_normal(nx),
                J=rng.standard_normal((m, nx)),
                b=rng.standard_normal(m),
                A=np.eye(nz, nx),
                B=-np.eye(nz),
            )
        )
    return make_qp(parts, nz)
