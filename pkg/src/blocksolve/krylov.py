"""Matrix-free GMRES (modified Gram-Schmidt Arnoldi, Givens least squares)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import Breakdown, DimensionMismatch, NonlinearOperator
from .report import SolveReport, Status

# Reorthogonalize when max |V' w| / ||w|| exceeds this after one MGS pass.
REORTH_TOL = 1e-8


@dataclass
class LinearOperator:
    """Square operator known only through ``apply(v) -> M v``."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)

    @classmethod
    def from_matrix(cls, M) -> LinearOperator:
        if M.shape[0] != M.shape[1]:
            raise DimensionMismatch(f"operator must be square, got {M.shape}")
        return cls(M.shape[0], lambda v: M @ v)


@dataclass
class GmresSettings:
    """Stopping and restart controls.

    Converged when ``||rhs - op(x)|| <= max(tol * ||rhs||, atol)``.
    ``restart = 0`` runs unrestarted up to ``max_iter`` iterations.
    """

    tol: float = 1e-8
    max_iter: int = 2000
    restart: int = 0
    atol: float = 0.0
    audit: bool = True
    audit_tol: float = 1e-12

    def __post_init__(self):
        if self.tol <= 0 and self.atol <= 0:
            raise ValueError("need a positive tol or atol")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.restart < 0:
            raise ValueError("restart must be nonnegative")


def audit_linearity(op: LinearOperator, tol: float = 1e-12, probes: int = 3, seed: int = 0) -> float:
    """Check ``op(a*x + b*y) = a*op(x) + b*op(y)`` on random probes.

    Returns the worst relative defect; raises :class:`NonlinearOperator` if
    it exceeds ``tol``. The defect is scaled by
    ``||op(a x + b y)|| + |a| ||op(x)|| + |b| ||op(y)||``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        x = rng.standard_normal(op.dim)
        y = rng.standard_normal(op.dim)
        x /= np.linalg.norm(x) or 1.0
        y /= np.linalg.norm(y) or 1.0
        a, b = rng.uniform(-2, 2, size=2)
        ox, oy, oxy = op(x), op(y), op(a * x + b * y)
        scale = np.linalg.norm(oxy) + abs(a) * np.linalg.norm(ox) + abs(b) * np.linalg.norm(oy)
        defect = np.linalg.norm(oxy - a * ox - b * oy) / max(scale, np.finfo(float).tiny)
        worst = max(worst, float(defect))
    if worst > tol:
        raise NonlinearOperator(
            f"operator failed the superposition audit: relative defect {worst:.3e} > {tol:.1e}"
        )
    return worst


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    h = np.hypot(a, b)
    return a / h, b / h


def gmres(
    op: LinearOperator,
    rhs: np.ndarray,
    x0: np.ndarray | None = None,
    settings: GmresSettings | None = None,
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``op(x) = rhs``.

    ``report.residuals`` holds the least-squares residual estimate
    ``||rhs - op(x_k)||`` for ``k = 0, 1, ...``; it is non-increasing when
    unrestarted. ``callback(x_k)`` is invoked after each iteration with the
    current iterate (forming it costs one small triangular solve plus a
    basis product, so pass it only when needed).

    Raises:
        Breakdown: the Krylov space became invariant while the residual is
            still above target, i.e. ``op`` is singular on that space.
        NonlinearOperator: the pre-solve superposition audit failed.
    """
    s = settings or GmresSettings()
    rhs = np.asarray(rhs, dtype=float)
    n = op.dim
    if rhs.shape[0] != n:
        raise DimensionMismatch(f"rhs has length {rhs.shape[0]}, operator dimension {n}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape[0] != n:
        raise DimensionMismatch("x0 has the wrong length")

    report = SolveReport(method="gmres")
    if s.audit and n > 0:
        report.extra["audit_defect"] = audit_linearity(op, s.audit_tol)

    bnorm = float(np.linalg.norm(rhs))
    target = max(s.tol * bnorm, s.atol)
    r = rhs - op(x) if np.any(x) else rhs.copy()
    beta = float(np.linalg.norm(r))
    report.residuals.append(beta)
    report.extra["target"] = target
    report.extra["reorthogonalizations"] = 0
    if beta <= target or n == 0:
        report.status = Status.CONVERGED
        report.final_residual = beta
        return x, report

    m = s.restart if s.restart > 0 else s.max_iter
    m = min(m, s.max_iter)
    total = 0
    status = Status.MAX_ITERATIONS
    while total < s.max_iter:
        kmax = min(m, s.max_iter - total, n)
        V = np.zeros((kmax + 1, n))
        Hh = np.zeros((kmax + 1, kmax))
        cs = np.zeros(kmax)
        sn = np.zeros(kmax)
        g = np.zeros(kmax + 1)
        g[0] = beta
        V[0] = r / beta
        k_done = 0
        done = False
        for k in range(kmax):
            w = op(V[k])
            wnorm0 = np.linalg.norm(w)
            for j in range(k + 1):
                Hh[j, k] = V[j] @ w
                w -= Hh[j, k] * V[j]
            hn = np.linalg.norm(w)
            if hn > 0 and np.abs(V[: k + 1] @ w).max() > REORTH_TOL * hn:
                corr = V[: k + 1] @ w
                w -= corr @ V[: k + 1]
                Hh[: k + 1, k] += corr
                hn = np.linalg.norm(w)
                report.extra["reorthogonalizations"] += 1
            Hh[k + 1, k] = hn
            for j in range(k):
                t = cs[j] * Hh[j, k] + sn[j] * Hh[j + 1, k]
                Hh[j + 1, k] = -sn[j] * Hh[j, k] + cs[j] * Hh[j + 1, k]
                Hh[j, k] = t
            cs[k], sn[k] = _givens(Hh[k, k], Hh[k + 1, k])
            Hh[k, k] = cs[k] * Hh[k, k] + sn[k] * Hh[k + 1, k]
            Hh[k + 1, k] = 0.0
            if abs(Hh[k, k]) <= np.finfo(float).eps * max(wnorm0, np.finfo(float).tiny):
                # op maps the new direction into the old basis: R is singular
                raise Breakdown(f"singular least-squares factor at iteration {total + 1}")
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            res = abs(g[k + 1])
            k_done = k + 1
            total += 1
            report.residuals.append(float(res))
            invariant = hn <= np.finfo(float).eps * max(wnorm0, 1.0)
            if callback is not None:
                callback(x + _combine(Hh, g, V, k_done))
            if res <= target:
                status = Status.CONVERGED
                done = True
                break
            if invariant:
                raise Breakdown(
                    f"Krylov space invariant at iteration {total} with residual {res:.3e} > {target:.3e}"
                )
            V[k + 1] = w / hn
        x = x + _combine(Hh, g, V, k_done)
        if done or total >= s.max_iter:
            break
        r = rhs - op(x)
        beta = float(np.linalg.norm(r))
        if beta <= target:
            status = Status.CONVERGED
            break

    report.iterations = total
    report.status = status
    report.final_residual = float(np.linalg.norm(rhs - op(x)))
    return x, report


def _combine(Hh: np.ndarray, g: np.ndarray, V: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros(V.shape[1])
    R = Hh[:k, :k]
    return solve_triangular(R, g[:k]) @ V[:k]
