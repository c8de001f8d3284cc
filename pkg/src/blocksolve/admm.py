"""ADMM for the block-structured QP with cached factorizations.

One step maps ``u = (v, z, y)`` to ``u+``:

1. ``K_rho_i v_i+ = (-c_i - rho A_i' B_i z - A_i' y_i, b_i)`` for each block,
2. ``z+ = -Sigma^{-1} (B' A v+ + B' y / rho)`` with ``Sigma = sum B_i' B_i``,
3. ``y_i+ = y_i + rho (A_i x_i+ + B_i z+)``.

This equals one Gauss-Seidel sweep ``M_rho^{-1} (N_rho u + r)`` of the
splitting ``H_rho = M_rho - N_rho`` (see :mod:`blocksolve.precond`).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .model import BlockQP, Iterate, kkt_residual
from .report import SolveReport, Status
from .sparse import SpdFactorization, SymIndefFactorization, factorize_spd, factorize_sym_indef


@dataclass(frozen=True)
class AdmmFactors:
    rho: float
    K_rho: tuple[SymIndefFactorization, ...]
    sigma: SpdFactorization
    # per-partition rho * A_i' B_i (n_x_i x n_z)
    AtB: tuple[sp.csr_matrix, ...]
    setup_time: float = 0.0


@dataclass
class AdmmSettings:
    """Loop controls.

    ``criterion="steps"`` stops on ``||y+ - y|| <= tol`` and
    ``||rho A'B (z+ - z)|| <= tol``; ``criterion="residual"`` stops on the
    true KKT residual ``||Hu - r|| <= tol``.
    """

    rho: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-8
    record_history: bool = True
    criterion: Literal["steps", "residual"] = "steps"

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.criterion not in ("steps", "residual"):
            raise ValueError(f"unknown criterion {self.criterion!r}")


def sigma_matrix(qp: BlockQP) -> np.ndarray:
    """Dense ``Sigma = sum_i B_i' B_i``."""
    return (qp.B_stack.T @ qp.B_stack).toarray()


def admm_setup(qp: BlockQP, rho: float, backend: str = "auto") -> AdmmFactors:
    """Factorize every ``K_rho_i`` and ``Sigma`` once for a fixed ``rho``.

    Raises:
        SingularMatrix: some ``K_rho_i`` is singular.
        NotPositiveDefinite: ``B`` is rank deficient.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    t0 = time.perf_counter()
    Ks = tuple(factorize_sym_indef(p.K_rho(rho), backend=backend) for p in qp.partitions)
    sigma = factorize_spd(sigma_matrix(qp))
    AtB = tuple((rho * (p.A.csc.T @ p.B.csc)).tocsr() for p in qp.partitions)
    return AdmmFactors(rho, Ks, sigma, AtB, time.perf_counter() - t0)


def admm_step(qp: BlockQP, f: AdmmFactors, u: Iterate | np.ndarray) -> Iterate:
    """Return ``T_rho(u)``, one ADMM sweep from ``u``."""
    vec = u.vec if isinstance(u, Iterate) else np.asarray(u, dtype=float)
    return Iterate(qp, _step(qp, f, vec))


def _step(qp: BlockQP, f: AdmmFactors, vec: np.ndarray) -> np.ndarray:
    lay = qp.layout
    rho = f.rho
    z = vec[lay.z]
    out = np.empty_like(vec)
    Bty = np.zeros(qp.nz)
    BtAx = np.zeros(qp.nz)
    xs = []
    for i, p in enumerate(qp.partitions):
        y = vec[lay.y[i]]
        rhs = np.empty(p.nv)
        rhs[: p.nx] = -p.c - f.AtB[i] @ z - p.A.csr.T @ y
        rhs[p.nx :] = p.b
        v = f.K_rho[i].solve(rhs)
        out[lay.v[i]] = v
        x = v[: p.nx]
        xs.append(x)
        Bt = p.B.csr.T
        Bty += Bt @ y
        BtAx += Bt @ (p.A.csc @ x)
    z_new = -f.sigma.solve(BtAx + Bty / rho)
    out[lay.z] = z_new
    for i, p in enumerate(qp.partitions):
        out[lay.y[i]] = vec[lay.y[i]] + rho * (p.A.csc @ xs[i] + p.B.csc @ z_new)
    return out


def step_norms(qp: BlockQP, f: AdmmFactors, old: np.ndarray, new: np.ndarray) -> tuple[float, float]:
    """``(||y+ - y||, sqrt(sum_i ||rho A_i' B_i (z+ - z)||^2))``."""
    lay = qp.layout
    dy = float(np.linalg.norm(new[lay.y_all] - old[lay.y_all]))
    dz = new[lay.z] - old[lay.z]
    dz_term = float(np.sqrt(sum(float(np.sum((m @ dz) ** 2)) for m in f.AtB)))
    return dy, dz_term


def admm_solve(
    qp: BlockQP,
    settings: AdmmSettings,
    u0: Iterate | None = None,
    factors: AdmmFactors | None = None,
) -> tuple[Iterate, SolveReport]:
    """Run ADMM from ``u0`` (zero by default) until the stopping rule holds.

    Hitting ``max_iter`` is reported as ``Status.MAX_ITERATIONS``, not raised.
    """
    report = SolveReport(method="admm", rho=settings.rho, n_admm=1)
    report.extra["criterion"] = settings.criterion
    if factors is None:
        with report.timed("factorize"):
            factors = admm_setup(qp, settings.rho)
    elif factors.rho != settings.rho:
        raise ValueError("factors were built for a different rho")
    vec = (u0.vec if u0 is not None else np.zeros(qp.dim)).copy()
    res = kkt_residual(qp, vec)
    report.residuals.append(res)
    dys, dzs = [], []
    status = Status.MAX_ITERATIONS
    k = 0
    with report.timed("iterate"):
        for k in range(1, settings.max_iter + 1):
            new = _step(qp, factors, vec)
            dy, dz = step_norms(qp, factors, vec, new)
            vec = new
            if settings.record_history or settings.criterion == "residual":
                res = kkt_residual(qp, vec)
            if settings.record_history:
                report.residuals.append(res)
                dys.append(dy)
                dzs.append(dz)
            if settings.criterion == "steps":
                done = dy <= settings.tol and dz <= settings.tol
            else:
                done = res <= settings.tol
            if done:
                status = Status.CONVERGED
                break
    report.iterations = k
    report.status = status
    report.final_residual = kkt_residual(qp, vec)
    if not settings.record_history:
        report.residuals.append(report.final_residual)
    report.extra["dy"] = dys
    report.extra["dz"] = dzs
    return Iterate(qp, vec), report
