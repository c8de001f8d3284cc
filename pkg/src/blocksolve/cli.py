"""Command-line harness: generate problems, run solvers, sweep parameters.

Subcommands::

    blocksolve solve     --problem stochastic --P 10 --nx 200 --nz 50 --method admm-gmres
    blocksolve bench     --nz-list 20,40,80,160 --methods schur,gmres,admm,admm-gmres
    blocksolve rho-sweep --rhos 1e-3,1e-2,1e-1,1,10,100,1000
    blocksolve gen       --problem setpoint --network case5 --out qp.json
    blocksolve verify    --instances 20

Exit codes: 0 success (``solve``: converged), 2 not converged or failed
verification, 1 usage or data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import BlockSolveError
from .model import BlockQP, load_qp, save_qp
from .problems import (
    StochasticQpSpec,
    build_setpoint_qp,
    bundled_network,
    dc_power_flow,
    gen_stochastic_qp,
    load_network,
)
from .report import SolveReport, Status
from .solvers import METHODS, SolveOptions, solve

SCHEMA = "blocksolve.report/1"
COLUMNS = (
    "method", "P", "nx", "nz", "rho", "n_admm", "iterations", "residual",
    "status", "t_setup_s", "t_solve_s", "seed", "message",
)
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
RHO_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
_RHO_METHODS = {"admm", "admm-gmres"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get("BLOCKSOLVE_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"BLOCKSOLVE_SEED must be an integer, got {raw!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _method_list(text: str) -> list[str]:
    out = [t.strip() for t in text.split(",") if t.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
    return out


# ---------------------------------------------------------------------------
# Problems


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to rebuild an instance inside a worker process."""

    kind: str
    P: int
    nx: int
    nz: int
    m: int
    seed: int
    network: str = "case3"
    sigma_load: float = 0.05
    input: str | None = None

    def build(self) -> BlockQP:
        if self.kind == "stochastic":
            return gen_stochastic_qp(StochasticQpSpec(P=self.P, nx=self.nx, nz=self.nz, m=self.m, seed=self.seed))
        if self.kind == "setpoint":
            net = _network(self.network)
            return build_setpoint_qp(net, dc_power_flow(net), P=self.P, sigma_load=self.sigma_load, seed=self.seed)
        if self.kind == "file":
            if not self.input:
                raise UsageError("--problem file needs --input")
            return load_qp(self.input)
        raise UsageError(f"unknown problem kind {self.kind!r}")


def _network(name: str):
    if Path(name).suffix == ".json" or os.sep in name:
        return load_network(name)
    return bundled_network(name)


def _problem_spec(args, nz: int | None = None, seed: int | None = None) -> ProblemSpec:
    return ProblemSpec(
        kind=args.problem,
        P=args.P,
        nx=args.nx,
        nz=args.nz if nz is None else nz,
        m=args.m,
        seed=args.seed if seed is None else seed,
        network=args.network,
        sigma_load=args.sigma_load,
        input=getattr(args, "input", None),
    )


# ---------------------------------------------------------------------------
# Rows and output


def report_row(qp: BlockQP, rep: SolveReport, seed: int | None, message: str = "") -> dict:
    uses_rho = rep.method in _RHO_METHODS
    t = rep.timings
    return {
        "method": rep.method,
        "P": qp.P,
        "nx": max(p.nx for p in qp.partitions),
        "nz": qp.nz,
        "rho": rep.rho if uses_rho else "",
        "n_admm": rep.n_admm if uses_rho else "",
        "iterations": rep.iterations,
        "residual": rep.final_residual,
        "status": rep.status.value,
        "t_setup_s": t.get("factorize", 0.0) + t.get("setup", 0.0),
        "t_solve_s": t.get("iterate", 0.0),
        "seed": "" if seed is None else seed,
        "message": message,
    }


def failure_row(spec: ProblemSpec, method: str, opts: SolveOptions, exc: Exception) -> dict:
    uses_rho = method in _RHO_METHODS
    return {
        "method": method, "P": spec.P, "nx": spec.nx, "nz": spec.nz,
        "rho": opts.rho if uses_rho else "", "n_admm": opts.n_admm if uses_rho else "",
        "iterations": 0, "residual": float("nan"), "status": Status.FAILED.value,
        "t_setup_s": 0.0, "t_solve_s": 0.0, "seed": spec.seed,
        "message": f"{type(exc).__name__}: {exc}",
    }


def format_rows(rows: Sequence[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"schema": SCHEMA, "columns": list(COLUMNS), "rows": list(rows)}, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA}\n")
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def read_rows(text: str) -> list[dict]:
    """Parse CSV or JSON written by :func:`format_rows` (values stay strings for CSV)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(stripped)
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {doc.get('schema')!r}")
        return doc["rows"]
    lines = text.splitlines()
    if not lines or lines[0] != f"# schema: {SCHEMA}":
        raise ValueError("missing or unsupported schema header")
    return list(csv.DictReader(lines[1:]))


def _emit(rows: Sequence[dict], args) -> None:
    text = format_rows(rows, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _plot(path: str, draw) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# Cell runner (top level so worker processes can import it)


def run_cell(spec: ProblemSpec, method: str, opts: SolveOptions) -> tuple[dict, list[float]]:
    """Build the instance, solve it, and return the row plus residual history.

    Solver errors are captured in the row so sweeps continue.
    """
    try:
        qp = spec.build()
        _, rep = solve(qp, method, opts)
    except (BlockSolveError, ValueError, ArithmeticError) as exc:
        return failure_row(spec, method, opts, exc), []
    return report_row(qp, rep, spec.seed), rep.residuals


def _run_cells(cells: list[tuple[ProblemSpec, str, SolveOptions]], jobs: int) -> list[tuple[dict, list[float]]]:
    if jobs <= 1 or len(cells) <= 1:
        return [run_cell(*c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_cell, *c) for c in cells]
        return [f.result() for f in futures]


def _options(args, rho: float | None = None) -> SolveOptions:
    return SolveOptions(
        rho=args.rho if rho is None else rho,
        max_iter=args.max_iter,
        tol=args.tol,
        n_admm=args.n_admm,
        restart=args.restart,
        record_history=bool(getattr(args, "plot", None)),
        admm_criterion=args.admm_criterion,
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_solve(args) -> int:
    spec = _problem_spec(args)
    qp = spec.build()
    opts = _options(args)
    opts.record_history = True
    _, rep = solve(qp, args.method, opts)
    rep.seed = spec.seed if spec.kind != "file" else None
    row = report_row(qp, rep, rep.seed)
    _emit([row], args)
    if args.plot:
        def draw(ax):
            ax.semilogy(np.arange(len(rep.residuals)), np.maximum(rep.residuals, 1e-300), label=rep.method)
            ax.axhline(args.tol, color="k", ls="--", lw=0.8, label="tolerance")
            ax.set_xlabel("iteration")
            ax.set_ylabel("||Hu - r||")
        _plot(args.plot, draw)
    print(
        f"{rep.method}: {rep.status.value} after {rep.iterations} iterations, "
        f"residual {rep.final_residual:.3e}",
        file=sys.stderr,
    )
    return EXIT_OK if rep.status is Status.CONVERGED else EXIT_NOT_CONVERGED


def cmd_bench(args) -> int:
    nz_list = args.nz_list or [args.nz]
    seeds = args.seeds or [args.seed]
    cells = [
        (_problem_spec(args, nz=nz, seed=seed), method, _options(args))
        for nz in nz_list
        for seed in seeds
        for method in args.methods
    ]
    results = _run_cells(cells, args.jobs)
    rows = [r for r, _ in results]
    _emit(rows, args)
    if args.plot:
        def draw(ax):
            for method in args.methods:
                pts = [(r["nz"], r["t_setup_s"] + r["t_solve_s"]) for r in rows if r["method"] == method]
                if pts:
                    xs, ts = zip(*pts)
                    ax.loglog(xs, ts, "o-", label=method)
            ax.set_xlabel("n_z")
            ax.set_ylabel("time (s)")
        _plot(args.plot, draw)
    return EXIT_OK


def cmd_rho_sweep(args) -> int:
    spec = _problem_spec(args)
    cells = [(spec, method, _options(args, rho=rho)) for rho in args.rhos for method in ("admm", "admm-gmres")]
    results = _run_cells(cells, args.jobs)
    rows = [r for r, _ in results]
    _emit(rows, args)
    failed = [r for r in rows if r["status"] != Status.CONVERGED.value]
    for r in failed:
        print(f"rho={r['rho']:g} {r['method']}: {r['status']}", file=sys.stderr)
    if args.plot:
        def draw(ax):
            for method in ("admm", "admm-gmres"):
                sub = [r for r in rows if r["method"] == method]
                ax.semilogx([r["rho"] for r in sub], [r["iterations"] for r in sub], "o-", label=method)
            ax.axhline(args.max_iter, color="k", ls="--", lw=0.8, label="iteration cap")
            ax.set_xlabel("rho")
            ax.set_ylabel("iterations")
        _plot(args.plot, draw)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.problem == "file":
        raise UsageError("gen writes a generated problem; use --problem stochastic or setpoint")
    if not args.out:
        raise UsageError("gen needs --out")
    qp = _problem_spec(args).build()
    save_qp(qp, args.out)
    print(f"wrote {args.out}: P={qp.P} n={qp.n} n_z={qp.nz} dim={qp.dim}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import equivalence_suite

    summary = equivalence_suite(args.instances, args.vectors, args.seed)
    for r in summary.records:
        print(
            f"seed={r.seed} P={r.P} dim={r.dim} rho={r.rho:.3g} "
            f"step={r.step_defect:.2e} matvec={r.matvec_defect:.2e}"
        )
    ok = summary.passed(args.tol)
    print(
        f"{'PASS' if ok else 'FAIL'}: max step defect {summary.max_step_defect:.2e}, "
        f"max matvec defect {summary.max_matvec_defect:.2e} (tol {args.tol:g})"
    )
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# Parser


def _add_problem_args(p: argparse.ArgumentParser, seed: int) -> None:
    g = p.add_argument_group("problem")
    g.add_argument("--problem", choices=("stochastic", "setpoint", "file"), default="stochastic")
    g.add_argument("--P", type=int, default=10, help="number of partitions / scenarios")
    g.add_argument("--nx", type=int, default=200, help="variables per partition (stochastic)")
    g.add_argument("--nz", type=int, default=50, help="coupling variables (stochastic)")
    g.add_argument("--m", type=int, default=20, help="constraints per partition (stochastic)")
    g.add_argument("--seed", type=int, default=seed, help="instance seed (default: $BLOCKSOLVE_SEED or 0)")
    g.add_argument("--network", default="case3", help="bundled network name or path to a network JSON")
    g.add_argument("--sigma-load", type=float, default=0.05, help="relative load noise (setpoint)")
    g.add_argument("--input", help="problem JSON for --problem file")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--rho", type=float, default=1.0)
    g.add_argument("--max-iter", type=int, default=2000)
    g.add_argument("--tol", type=float, default=1e-8, help="target for ||Hu - r||")
    g.add_argument("--n-admm", type=int, default=1, help="ADMM sweeps per preconditioner application")
    g.add_argument("--restart", type=int, default=0, help="GMRES restart length (0: none)")
    g.add_argument("--admm-criterion", choices=("residual", "steps"), default="residual")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("output")
    g.add_argument("--out", help="report path (default: stdout)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--plot", metavar="SVG", help="write an SVG plot")


def build_parser(seed: int = 0) -> argparse.ArgumentParser:
    parser = _Parser(prog="blocksolve", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one instance")
    _add_problem_args(p, seed)
    p.add_argument("--method", choices=METHODS, default="admm-gmres")
    _add_solver_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="method x n_z sweep")
    _add_problem_args(p, seed)
    p.add_argument("--nz-list", type=_int_list, help="comma-separated n_z values (default: --nz)")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds (default: --seed)")
    p.add_argument("--methods", type=_method_list, default=["schur", "gmres", "admm", "admm-gmres"])
    p.add_argument("--jobs", type=int, default=1)
    _add_solver_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rho-sweep", help="ADMM and ADMM-GMRES over a rho grid")
    _add_problem_args(p, seed)
    p.add_argument("--rhos", type=_float_list, default=list(RHO_GRID))
    p.add_argument("--jobs", type=int, default=1)
    _add_solver_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_rho_sweep)

    p = sub.add_parser("gen", help="write a problem JSON")
    _add_problem_args(p, seed)
    p.add_argument("--out", help="output path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="check ADMM sweeps against the dense splitting")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--vectors", type=int, default=5)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_verify)
    return parser


def _check(args) -> None:
    for name in ("P", "nx", "nz", "max_iter", "n_admm", "jobs", "instances", "vectors"):
        val = getattr(args, name, None)
        if val is not None and val < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be at least 1")
    for name in ("m", "restart"):
        val = getattr(args, name, None)
        if val is not None and val < 0:
            raise UsageError(f"--{name} must be nonnegative")
    for name in ("rho", "tol"):
        val = getattr(args, name, None)
        if val is not None and not val > 0:
            raise UsageError(f"--{name} must be positive")
    rhos = getattr(args, "rhos", None)
    if rhos is not None and (not rhos or min(rhos) <= 0):
        raise UsageError("--rhos must be a nonempty list of positive values")
    if getattr(args, "problem", None) == "file" and not args.input:
        raise UsageError("--problem file needs --input")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        seed = default_seed()
        try:
            args = build_parser(seed).parse_args(argv)
        except SystemExit as exc:  # --help or a usage error
            return int(exc.code or 0)
        _check(args)
        return args.func(args)
    except UsageError as exc:
        print(f"blocksolve: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (BlockSolveError, OSError, ValueError) as exc:
        print(f"blocksolve: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
