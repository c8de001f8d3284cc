"""Uniform entry point over every solution method."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admm import AdmmSettings, admm_solve
from .krylov import GmresSettings, LinearOperator, gmres
from .model import BlockQP, Iterate, kkt_residual
from .precond import admm_gmres_solve
from .report import SolveReport, Status
from .schur import direct_solve, schur_solve

METHODS = ("direct", "schur", "admm", "gmres", "admm-gmres")


@dataclass
class SolveOptions:
    """Shared controls. Defaults follow the benchmark protocol."""

    rho: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-8
    n_admm: int = 1
    restart: int = 0
    record_history: bool = True
    # "residual" stops ADMM on ||Hu - r|| like the other methods; "steps"
    # uses the primal/dual step norms.
    admm_criterion: str = "residual"


def gmres_solve(
    qp: BlockQP,
    eps: float = 1e-8,
    max_iter: int = 2000,
    restart: int = 0,
    record_history: bool = True,
) -> tuple[Iterate, SolveReport]:
    """Unpreconditioned GMRES on the compact ``H u = r``.

    The GMRES residual here is the true KKT residual, so the absolute target
    is ``eps`` directly.
    """
    report = SolveReport(method="gmres")
    kkt = qp.kkt
    with report.timed("setup"):
        H = kkt.H.csr
        op = LinearOperator.from_matrix(H)
    hist = [kkt_residual(qp, np.zeros(qp.dim))]
    callback = (lambda xk: hist.append(kkt_residual(qp, xk))) if record_history else None
    settings = GmresSettings(tol=0.0, atol=eps, max_iter=max_iter, restart=restart, audit=False)
    with report.timed("iterate"):
        x, grep = gmres(op, kkt.r, None, settings, callback=callback)
    report.iterations = grep.iterations
    report.final_residual = kkt_residual(qp, x)
    if not record_history:
        hist.append(report.final_residual)
    report.residuals = hist
    if report.final_residual <= eps:
        report.status = Status.CONVERGED
    else:
        report.status = Status.MAX_ITERATIONS if grep.iterations >= max_iter else Status.NOT_CONVERGED
    report.extra["estimates"] = grep.residuals
    return Iterate(qp, x), report


def solve(qp: BlockQP, method: str, options: SolveOptions | None = None) -> tuple[Iterate, SolveReport]:
    """Run ``method`` (one of :data:`METHODS`) on ``qp``.

    ``report.final_residual`` is always recomputed from the returned iterate.
    """
    o = options or SolveOptions()
    if method == "direct":
        u, rep = direct_solve(qp)
    elif method == "schur":
        u, rep = schur_solve(qp)
    elif method == "admm":
        settings = AdmmSettings(
            rho=o.rho, max_iter=o.max_iter, tol=o.tol,
            record_history=o.record_history, criterion=o.admm_criterion,
        )
        u, rep = admm_solve(qp, settings)
    elif method == "gmres":
        u, rep = gmres_solve(qp, o.tol, o.max_iter, o.restart, o.record_history)
    elif method == "admm-gmres":
        u, rep = admm_gmres_solve(
            qp, rho=o.rho, n_gmres=o.max_iter, n_admm=o.n_admm, eps=o.tol,
            restart=o.restart, record_history=o.record_history,
        )
    else:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    rep.final_residual = kkt_residual(qp, u)
    if rep.status is Status.CONVERGED and rep.final_residual > o.tol and method in ("direct", "schur"):
        rep.status = Status.NOT_CONVERGED
    return u, rep
