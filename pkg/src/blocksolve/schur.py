"""Schur complement decomposition and the monolithic direct solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BlockQP, Iterate, kkt_residual
from .report import SolveReport, Status
from .sparse import SymIndefFactorization, factorize_sym_indef

# Final residual target used to tag a direct solve as converged.
DIRECT_TOL = 1e-8


@dataclass
class SchurWorkspace:
    """Per-partition ``K_s_i`` factors plus the assembled coupling system."""

    factors: list[SymIndefFactorization]
    S: np.ndarray
    r_sc: np.ndarray
    factorization_count: int = 0


def _y_positions(qp: BlockQP, i: int) -> slice:
    p = qp.partitions[i]
    return slice(p.nv, p.nv + p.l)


def _gamma_s(qp: BlockQP, i: int) -> np.ndarray:
    p = qp.partitions[i]
    return np.concatenate([p.gamma, np.zeros(p.l)])


def _accumulate(qp: BlockQP, factors, order=None) -> tuple[np.ndarray, np.ndarray]:
    nz = qp.nz
    S = np.zeros((nz, nz))
    r_sc = np.zeros(nz)
    for i in order if order is not None else range(qp.P):
        p = qp.partitions[i]
        ys = _y_positions(qp, i)
        # only the l_i columns of K_s_i^{-1} that meet B_s_i = [0; 0; B_i]
        E = np.zeros((factors[i].dim, p.l))
        E[p.nv + np.arange(p.l), np.arange(p.l)] = 1.0
        W = factors[i].solve(E)[ys, :]
        Bi = p.B.toarray()
        S += Bi.T @ W @ Bi
        r_sc += Bi.T @ factors[i].solve(_gamma_s(qp, i))[ys]
    return 0.5 * (S + S.T), r_sc


def assemble_schur(qp: BlockQP, backend: str = "auto", order=None) -> SchurWorkspace:
    """Factorize every ``K_s_i`` and accumulate ``S`` and ``r_sc``.

    ``order`` permutes the accumulation sequence (the result is the same up
    to rounding).
    """
    factors = [factorize_sym_indef(p.K_s, backend=backend) for p in qp.partitions]
    S, r_sc = _accumulate(qp, factors, order)
    return SchurWorkspace(factors, S, r_sc, factorization_count=qp.P)


def schur_solve(qp: BlockQP, backend: str = "auto") -> tuple[Iterate, SolveReport]:
    """Solve the KKT system by Schur complement decomposition.

    Raises:
        SingularMatrix: some ``K_s_i`` or the assembled ``S`` is singular.
    """
    report = SolveReport(method="schur")
    u = Iterate.zeros(qp)
    report.residuals.append(kkt_residual(qp, u))
    with report.timed("factorize"):
        factors = [factorize_sym_indef(p.K_s, backend=backend) for p in qp.partitions]
    with report.timed("setup"):
        S, r_sc = _accumulate(qp, factors)
    with report.timed("factorize"):
        fS = factorize_sym_indef(S, backend="dense")
    with report.timed("iterate"):
        z = fS.solve(r_sc)
        lay = qp.layout
        u.vec[lay.z] = z
        for i, p in enumerate(qp.partitions):
            rhs = _gamma_s(qp, i)
            rhs[_y_positions(qp, i)] -= p.B.csc @ z
            sol = factors[i].solve(rhs)
            u.vec[lay.v[i]] = sol[: p.nv]
            u.vec[lay.y[i]] = sol[p.nv :]
    report.iterations = 1
    report.final_residual = kkt_residual(qp, u)
    report.residuals.append(report.final_residual)
    report.status = Status.CONVERGED if report.final_residual <= DIRECT_TOL else Status.NOT_CONVERGED
    report.extra["factorization_count"] = qp.P + 1
    return u, report


def direct_solve(qp: BlockQP, backend: str = "auto") -> tuple[Iterate, SolveReport]:
    """Factorize the full compact ``H`` and solve once."""
    report = SolveReport(method="direct")
    u = Iterate.zeros(qp)
    report.residuals.append(kkt_residual(qp, u))
    kkt = qp.kkt
    with report.timed("factorize"):
        f = factorize_sym_indef(kkt.H, backend=backend)
    with report.timed("iterate"):
        u.vec[:] = f.solve(kkt.r)
    report.iterations = 1
    report.final_residual = kkt_residual(qp, u)
    report.residuals.append(report.final_residual)
    report.status = Status.CONVERGED if report.final_residual <= DIRECT_TOL else Status.NOT_CONVERGED
    report.extra["factorization_count"] = 1
    return u, report
