"""Splitting-equivalence checks on small random instances.

For each instance the ADMM sweep is compared against the dense
``M^{-1} (N u + r)`` and the matrix-free operator against ``(I - G) h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admm import _step, admm_setup
from .precond import TRhoOperator, build_dense_splitting
from .problems import random_block_qp, rng_stream


@dataclass
class EquivalenceRecord:
    seed: int
    P: int
    dim: int
    rho: float
    step_defect: float
    matvec_defect: float


@dataclass
class EquivalenceSummary:
    records: list[EquivalenceRecord] = field(default_factory=list)

    @property
    def max_step_defect(self) -> float:
        return max((r.step_defect for r in self.records), default=0.0)

    @property
    def max_matvec_defect(self) -> float:
        return max((r.matvec_defect for r in self.records), default=0.0)

    def passed(self, tol: float = 1e-10) -> bool:
        return self.max_step_defect <= tol and self.max_matvec_defect <= tol


def check_instance(seed: int, n_vectors: int = 5, rho: float | None = None) -> EquivalenceRecord:
    """Worst relative defects ``||a - b|| / (1 + ||u||)`` over random vectors."""
    qp = random_block_qp(seed)
    rng = rng_stream(seed, 7)
    if rho is None:
        rho = float(10.0 ** rng.uniform(-2, 2))
    dense = build_dense_splitting(qp, rho)
    factors = admm_setup(qp, rho)
    T = TRhoOperator(qp, factors)
    step_defect = matvec_defect = 0.0
    for _ in range(n_vectors):
        u = rng.standard_normal(qp.dim) * 10.0 ** rng.uniform(-1, 1)
        scale = 1.0 + np.linalg.norm(u)
        step_defect = max(step_defect, float(np.linalg.norm(_step(qp, factors, u) - dense.step(u)) / scale))
        ref = u - dense.G @ u
        matvec_defect = max(matvec_defect, float(np.linalg.norm(T.apply(u) - ref) / scale))
    return EquivalenceRecord(seed, qp.P, qp.dim, rho, step_defect, matvec_defect)


def equivalence_suite(n_instances: int = 20, n_vectors: int = 5, seed: int = 0) -> EquivalenceSummary:
    summary = EquivalenceSummary()
    for k in range(n_instances):
        summary.records.append(check_instance(seed * 100003 + k, n_vectors))
    return summary
