"""Solver run reports."""

from __future__ import annotations

import enum
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    NOT_CONVERGED = "not_converged"
    FAILED = "failed"


@dataclass
class SolveReport:
    """Outcome of one solve.

    ``residuals`` holds the true KKT residual ``||Hu - r||`` for the initial
    point and after every iteration, so ``len(residuals) == iterations + 1``.
    Solver-specific series (step norms, preconditioned residuals) go in
    ``extra``.
    """

    method: str
    status: Status = Status.MAX_ITERATIONS
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    final_residual: float = float("nan")
    timings: dict[str, float] = field(default_factory=dict)
    rho: float | None = None
    n_admm: int | None = None
    seed: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @contextmanager
    def timed(self, phase: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[phase] = self.timings.get(phase, 0.0) + time.perf_counter() - t0

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["status"] = self.status.value
        return d
