"""ADMM as a preconditioner for GMRES.

The ADMM sweep is the affine map ``T(u) = G u + f`` with ``G = M^{-1} N`` and
``f = M^{-1} r`` for the splitting ``H_rho = M - N``. GMRES is run on
``(I - G) u = f`` using only ADMM sweeps::

    (I - G) h = h - (T(h) - T(0))

With ``n_admm > 1`` sweeps per application both sides use ``T^n``, giving
``(I - G^n) u = T^n(0)``, which has the same solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .admm import AdmmFactors, _step, admm_setup
from .exceptions import DimensionCap
from .krylov import GmresSettings, LinearOperator, gmres
from .model import BlockQP, Iterate, assemble_regularized_kkt, kkt_residual
from .report import SolveReport, Status
from .sparse import write_matrix_market

# Tighten the inner GMRES target by this factor when the true residual misses.
RESUME_FACTOR = 0.1
MAX_RESUMES = 3


class TRhoOperator:
    """Matrix-free ``I - G^n`` built from ``n`` ADMM sweeps per application."""

    def __init__(self, qp: BlockQP, factors: AdmmFactors, n_admm: int = 1):
        if n_admm < 1:
            raise ValueError("n_admm must be at least 1")
        self.qp = qp
        self.factors = factors
        self.n_admm = n_admm
        self.sweeps = 0
        self.f = self.T(np.zeros(qp.dim))

    @property
    def dim(self) -> int:
        return self.qp.dim

    @property
    def rho(self) -> float:
        return self.factors.rho

    def T(self, h: np.ndarray) -> np.ndarray:
        """``T^n(h)``."""
        out = np.asarray(h, dtype=float)
        for _ in range(self.n_admm):
            out = _step(self.qp, self.factors, out)
        self.sweeps += self.n_admm
        return out

    def apply(self, h: np.ndarray) -> np.ndarray:
        return h - (self.T(h) - self.f)

    __call__ = apply

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.dim, self.apply)


def make_trho_operator(qp: BlockQP, factors: AdmmFactors, n_admm: int = 1) -> TRhoOperator:
    return TRhoOperator(qp, factors, n_admm)


def admm_gmres_solve(
    qp: BlockQP,
    rho: float = 1.0,
    n_gmres: int = 2000,
    n_admm: int = 1,
    eps: float = 1e-8,
    restart: int = 0,
    record_history: bool = True,
    factors: AdmmFactors | None = None,
    audit: bool = True,
) -> tuple[Iterate, SolveReport]:
    """GMRES on the ADMM-preconditioned KKT system.

    GMRES monitors the preconditioned residual ``||f - (I - G^n) u||``. Once
    it stops, the true residual ``||Hu - r||`` is checked against ``eps``; if
    it misses, GMRES resumes from the current iterate with its target scaled
    by ``min(RESUME_FACTOR, eps / (2 * true residual))`` (at most
    ``MAX_RESUMES`` times).

    ``report.iterations`` counts GMRES iterations across resumptions;
    ``report.residuals`` are true residuals per iteration and
    ``report.extra["preconditioned_residuals"]`` the GMRES estimates.
    """
    report = SolveReport(method="admm-gmres", rho=rho, n_admm=n_admm)
    if factors is None:
        with report.timed("factorize"):
            factors = admm_setup(qp, rho)
    with report.timed("setup"):
        T = make_trho_operator(qp, factors, n_admm)
        op = T.as_operator()
    f = T.f
    r_norm = float(np.linalg.norm(qp.rhs))
    f_norm = float(np.linalg.norm(f))
    # start from eps scaled by the ratio of preconditioned to true rhs size
    inner = eps * min(1.0, f_norm / r_norm) if r_norm > 0 else eps
    x = np.zeros(qp.dim)
    true_hist = [kkt_residual(qp, x)]
    prec_hist: list[float] = []
    total = 0
    resumes = 0
    status = Status.NOT_CONVERGED
    callback = (lambda xk: true_hist.append(kkt_residual(qp, xk))) if record_history else None
    with report.timed("iterate"):
        while True:
            settings = GmresSettings(
                tol=0.0, atol=inner, max_iter=n_gmres - total, restart=restart,
                audit=audit and resumes == 0,
            )
            x, grep = gmres(op, f, x, settings, callback=callback)
            if "audit_defect" in grep.extra:
                report.extra["audit_defect"] = grep.extra["audit_defect"]
            prec_hist.extend(grep.residuals if not prec_hist else grep.residuals[1:])
            total += grep.iterations
            final = kkt_residual(qp, x)
            if final <= eps:
                status = Status.CONVERGED
                break
            if total >= n_gmres or resumes >= MAX_RESUMES:
                break
            resumes += 1
            # at least RESUME_FACTOR, more if the observed gap demands it
            inner *= min(RESUME_FACTOR, 0.5 * eps / final)
    if not record_history:
        true_hist.append(final)
    report.iterations = total
    report.status = status
    report.residuals = true_hist
    report.final_residual = final
    report.extra.update(
        preconditioned_residuals=prec_hist,
        resumes=resumes,
        admm_sweeps=T.sweeps,
        inner_tolerance=inner,
    )
    return Iterate(qp, x), report


def richardson_solve(
    qp: BlockQP,
    rho: float = 1.0,
    max_iter: int = 2000,
    eps: float = 1e-8,
    u0: Iterate | None = None,
    factors: AdmmFactors | None = None,
) -> tuple[Iterate, SolveReport]:
    """Stationary iteration ``u <- G u + f`` evaluated as ADMM sweeps.

    Stops when ``||Hu - r|| <= eps``; ``max_iter = 0`` returns ``u0``.
    """
    report = SolveReport(method="richardson", rho=rho, n_admm=1)
    if factors is None:
        with report.timed("factorize"):
            factors = admm_setup(qp, rho)
    vec = (u0.vec if u0 is not None else np.zeros(qp.dim)).copy()
    res = kkt_residual(qp, vec)
    report.residuals.append(res)
    status = Status.CONVERGED if res <= eps else Status.NOT_CONVERGED
    k = 0
    with report.timed("iterate"):
        while status is not Status.CONVERGED and k < max_iter:
            vec = _step(qp, factors, vec)
            k += 1
            res = kkt_residual(qp, vec)
            report.residuals.append(res)
            if res <= eps:
                status = Status.CONVERGED
    report.iterations = k
    report.status = status
    report.final_residual = res
    return Iterate(qp, vec), report


# ---------------------------------------------------------------------------
# Dense splitting (verification only)


@dataclass
class DenseSplitting:
    """Dense ``M``, ``N`` with ``M - N = H_rho``, and ``G = M^{-1} N``, ``f = M^{-1} r``."""

    rho: float
    H_rho: np.ndarray
    M: np.ndarray
    N: np.ndarray
    r: np.ndarray
    G: np.ndarray = field(init=False)
    f: np.ndarray = field(init=False)

    def __post_init__(self):
        self.G = np.linalg.solve(self.M, self.N)
        self.f = np.linalg.solve(self.M, self.r)

    def step(self, u: np.ndarray) -> np.ndarray:
        """``M^{-1} (N u + r)``."""
        return np.linalg.solve(self.M, self.N @ u + self.r)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.G)

    def spectral_radius(self) -> float:
        return float(np.abs(self.eigenvalues()).max())

    def dump(self, directory: str | Path) -> list[Path]:
        """Write ``M``, ``N``, ``G``, ``H_rho`` and ``f`` as MatrixMarket files."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in ("M", "N", "G", "H_rho"):
            path = out / f"{name}.mtx"
            write_matrix_market(path, getattr(self, name))
            paths.append(path)
        path = out / "f.mtx"
        write_matrix_market(path, self.f.reshape(-1, 1))
        paths.append(path)
        return paths


def build_dense_splitting(qp: BlockQP, rho: float, cap: int = 500) -> DenseSplitting:
    """Assemble the Gauss-Seidel splitting of ``H_rho`` densely.

    ``M = [[K_rho, 0, 0], [rho B'A, rho B'B, 0], [A, B, -I/rho]]`` and
    ``N = [[0, -rho A'B, -A'], [0, 0, -B'], [0, 0, -I/rho]]``.

    Raises:
        DimensionCap: ``qp.dim > cap``.
    """
    if qp.dim > cap:
        raise DimensionCap(f"dense splitting limited to dimension {cap}, got {qp.dim}")
    if rho <= 0:
        raise ValueError("rho must be positive")
    nv = qp.layout.v_all.stop
    nz, l = qp.nz, qp.l
    A = qp.A_tilde
    B = qp.B_stack
    K_rho = sp.block_diag([p.K_rho(rho).csc for p in qp.partitions])
    Il = sp.identity(l) / rho
    M = sp.bmat(
        [
            [K_rho, sp.csc_matrix((nv, nz)), sp.csc_matrix((nv, l))],
            [rho * (B.T @ A), rho * (B.T @ B), sp.csc_matrix((nz, l))],
            [A, B, -Il],
        ]
    ).toarray()
    N = sp.bmat(
        [
            [sp.csc_matrix((nv, nv)), -rho * (A.T @ B), -A.T],
            [sp.csc_matrix((nz, nv)), sp.csc_matrix((nz, nz)), -B.T],
            [sp.csc_matrix((l, nv)), sp.csc_matrix((l, nz)), -Il],
        ]
    ).toarray()
    H_rho = assemble_regularized_kkt(qp, rho).H.toarray()
    return DenseSplitting(rho, H_rho, M, N, qp.rhs.copy())


def steps_to_tolerance(qp: BlockQP, factors: AdmmFactors, tol: float = 1e-12, max_steps: int = 100000) -> int:
    """Sweeps from zero until ``||Hu - r|| <= tol * max(1, ||r||)``."""
    vec = np.zeros(qp.dim)
    target = tol * max(1.0, float(np.linalg.norm(qp.rhs)))
    for k in range(1, max_steps + 1):
        vec = _step(qp, factors, vec)
        if kkt_residual(qp, vec) <= target:
            return k
    raise RuntimeError(f"ADMM did not reach {tol:g} within {max_steps} sweeps")
