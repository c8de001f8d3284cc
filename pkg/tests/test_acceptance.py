"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``. Each check returns ``(passed, detail)``;
the pytest wrappers print the line and assert on it.
"""

from __future__ import annotations

import itertools
import sys
import time

import numpy as np
import pytest

from blocksolve.admm import admm_setup
from blocksolve.precond import admm_gmres_solve, steps_to_tolerance
from blocksolve.problems import (
    StochasticQpSpec,
    build_setpoint_qp,
    bundled_network,
    dc_power_flow,
    gen_stochastic_qp,
    random_block_qp,
    setpoint_cost,
)
from blocksolve.report import Status
from blocksolve.schur import direct_solve, schur_solve
from blocksolve.solvers import SolveOptions, solve
from blocksolve.verify import equivalence_suite

EPS = 1e-8
CAP = 2000
PROTOCOL = StochasticQpSpec(P=10, nx=200, nz=50, m=20, seed=7)
RHO_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / (1.0 + np.linalg.norm(a)))


_suite_cache: dict = {}


def _equivalence():
    if "suite" not in _suite_cache:
        t0 = time.perf_counter()
        summary = equivalence_suite(n_instances=20, n_vectors=5, seed=0)
        _suite_cache["suite"] = (summary, time.perf_counter() - t0)
    return _suite_cache["suite"]


def check_splitting_equivalence():
    summary, elapsed = _equivalence()
    worst = summary.max_step_defect
    ok = worst <= 1e-10 and elapsed < 5.0 and len(summary.records) >= 20
    return ok, f"max ||step - M^-1(Nu + r)||/(1+||u||) = {worst:.2e} over 20x5, {elapsed:.2f} s"


def check_matvec_identity():
    summary, _ = _equivalence()
    worst = summary.max_matvec_defect
    return worst <= 1e-10, f"max ||apply(h) - (I - G)h||/(1+||h||) = {worst:.2e}"


def check_cross_solver():
    worst = 0.0
    for k in range(20):
        qp = random_block_qp(1000 + k)
        us, _ = schur_solve(qp)
        ud, _ = direct_solve(qp)
        ua, rep = admm_gmres_solve(qp, rho=1.0, eps=EPS)
        if rep.status is not Status.CONVERGED:
            return False, f"admm-gmres did not converge on instance {k}"
        for a, b in itertools.combinations((us.vec, ud.vec, ua.vec), 2):
            worst = max(worst, _rel(a, b))
    net = bundled_network("case5")
    nom = dc_power_flow(net)
    qp = build_setpoint_qp(net, nom, P=50, sigma_load=0.0, seed=0)
    sols = [solve(qp, m)[0] for m in ("schur", "direct", "admm-gmres")]
    sp_diff = max(_rel(a.vec, b.vec) for a, b in itertools.combinations(sols, 2))
    cost = max(abs(setpoint_cost(qp, u)) for u in sols)
    ok = worst <= 1e-8 and sp_diff <= 1e-8 and cost <= 1e-10
    return ok, (
        f"random max pairwise ||du||/(1+||u||) = {worst:.2e}; "
        f"set-point pairwise {sp_diff:.2e}, objective {cost:.1e}"
    )


def check_convergence_protocol():
    t0 = time.perf_counter()
    qp = gen_stochastic_qp(PROTOCOL)
    opts = SolveOptions(rho=1.0, max_iter=CAP, tol=EPS, record_history=False)
    reports = {m: solve(qp, m, opts)[1] for m in ("schur", "admm-gmres", "admm", "gmres")}
    elapsed = time.perf_counter() - t0
    reached = all(reports[m].converged and reports[m].final_residual <= EPS for m in ("schur", "admm-gmres"))
    it = {m: reports[m].iterations for m in ("admm-gmres", "admm", "gmres")}
    # a method capped at CAP without converging still counts CAP iterations
    ordered = it["admm-gmres"] < it["admm"] < it["gmres"]
    ok = reached and ordered and elapsed < 60.0
    return ok, (
        f"iterations admm-gmres {it['admm-gmres']} < admm {it['admm']} < gmres {it['gmres']}; "
        f"schur residual {reports['schur'].final_residual:.1e}, {elapsed:.1f} s"
    )


def check_rho_robustness():
    qp = gen_stochastic_qp(PROTOCOL)
    opts = SolveOptions(max_iter=CAP, tol=EPS, record_history=False)
    ag, ad = {}, {}
    for rho in RHO_GRID:
        opts.rho = rho
        ag[rho] = solve(qp, "admm-gmres", opts)[1]
        ad[rho] = solve(qp, "admm", opts)[1]
    all_conv = all(r.converged for r in ag.values())
    counts = [r.iterations for r in ag.values()]
    spread = max(counts) / min(counts)
    extremes = all(ad[r].status is Status.MAX_ITERATIONS for r in (RHO_GRID[0], RHO_GRID[-1]))
    ok = all_conv and spread <= 10.0 and extremes
    return ok, (
        f"admm-gmres iterations {counts} (max/min {spread:.1f}); "
        f"admm at extremes: {ad[RHO_GRID[0]].status.value}, {ad[RHO_GRID[-1]].status.value}"
    )


def check_generator_fidelity():
    d1 = StochasticQpSpec().dimensions()
    d2 = StochasticQpSpec(nz=4000).dimensions()
    got = (d1["second_stage_variables"], d1["partition_constraints"], d2["total_variables"], d2["total_constraints"])
    return got == (240_000, 5_000, 244_000, 205_000), "second-stage/partition/total vars/total cons = " + "/".join(map(str, got))


def check_preconditioner_perfection():
    worst = 0
    for k in range(10):
        qp = random_block_qp(2000 + k)
        f = admm_setup(qp, 1.0)
        n = steps_to_tolerance(qp, f, 1e-12)
        _, rep = admm_gmres_solve(qp, rho=1.0, n_admm=n, eps=EPS, factors=f)
        if not rep.converged:
            return False, f"instance {k} did not converge"
        worst = max(worst, rep.iterations)
    return worst <= 2, f"max GMRES iterations with converged inner ADMM = {worst} over 10 instances"


def _time_sweep(nz_list, repeats=3):
    times = {"schur": [], "admm-gmres": []}
    for nz in nz_list:
        qp = gen_stochastic_qp(StochasticQpSpec(P=10, nx=200, nz=nz, m=20, seed=7))
        for method in times:
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                _, rep = solve(qp, method, SolveOptions(record_history=False))
                best = min(best, time.perf_counter() - t0)
                if not rep.converged:
                    raise AssertionError(f"{method} did not converge at nz={nz}")
            times[method].append(best)
    return times


def check_scalability_trend(retries=3):
    nz_list = (20, 40, 80, 160)
    detail = ""
    for attempt in range(1, retries + 1):
        t = _time_sweep(nz_list)
        s, a = t["schur"], t["admm-gmres"]
        monotone = all(x < y for x, y in zip(s, s[1:]))
        rs, ra = s[-1] / s[0], a[-1] / a[0]
        detail = (
            f"schur t(160)/t(20) = {rs:.2f} vs admm-gmres {ra:.2f}, schur times "
            f"{', '.join(f'{x:.3f}' for x in s)} s (attempt {attempt})"
        )
        if monotone and rs > ra:
            return True, detail
    return False, detail


CRITERIA = [
    (1, "splitting equivalence", check_splitting_equivalence),
    (2, "matvec identity", check_matvec_identity),
    (3, "cross-solver oracle", check_cross_solver),
    (4, "convergence protocol", check_convergence_protocol),
    (5, "rho robustness", check_rho_robustness),
    (6, "generator fidelity", check_generator_fidelity),
    (7, "preconditioner perfection", check_preconditioner_perfection),
    (8, "scalability trend", check_scalability_trend),
]


def _line(num, name, ok, detail):
    return f"criterion {num} [{name}]: {'PASS' if ok else 'FAIL'} - {detail}"


@pytest.mark.parametrize("num, name, check", CRITERIA, ids=[f"c{n}_{s.replace(' ', '_')}" for n, s, _ in CRITERIA])
def test_criterion(num, name, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print("\n" + _line(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, name, check in CRITERIA:
        ok, detail = check()
        failed += not ok
        print(_line(num, name, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
