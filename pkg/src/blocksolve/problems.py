"""Benchmark problem families.

Random streams
--------------
Every generator draws from Philox (a counter-based bit generator) keyed by
``SeedSequence(seed, spawn_key=stream)``. Stream keys:

=====================  =================
``(0,)``               Hessian blocks
``(1,)``               cost vector ``c``
``(2,)``               Jacobian ``J``
``(3,)``               nominal ``b``
``(4, i)``             scenario ``i`` noise on ``b``
``(5, s)``             scenario ``s`` load noise (set-point QP)
``(6,)``               small verification instances
=====================  =================

Instances are therefore bit-identical for a given seed on any platform with
the same NumPy Philox implementation.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    DisconnectedNetwork,
    ImbalancedDispatch,
    InvalidNetwork,
    InvalidSpec,
    ParseError,
)
from .model import BlockQP, Partition
from .sparse import SparseMatrix, factorize_sym_indef

STREAM_HESSIAN = (0,)
STREAM_COST = (1,)
STREAM_JACOBIAN = (2,)
STREAM_RHS = (3,)
STREAM_SCENARIO = 4
STREAM_LOAD = 5


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# Two-stage stochastic QP


@dataclass(frozen=True)
class StochasticQpSpec:
    """Parameters of the random two-stage stochastic QP.

    Defaults are the full-size benchmark (50 scenarios of 4800 variables,
    16 Hessian blocks, 100 rows in ``J``); tests use much smaller values.
    """

    P: int = 50
    nx: int = 4800
    nz: int = 100
    m: int = 100
    hessian_blocks: int = 16
    log_std: float = 0.5
    rhs_noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.P < 1 or self.nx < 1 or self.nz < 1 or self.m < 0:
            raise InvalidSpec("P, nx, nz must be positive and m nonnegative")
        if self.nz > self.nx:
            raise InvalidSpec("nz must not exceed nx")
        if self.m >= self.nx:
            raise InvalidSpec("m must be smaller than nx")
        if self.m + self.nz > self.nx:
            raise InvalidSpec("m + nz must not exceed nx ([J; A_i] needs full row rank)")
        if self.hessian_blocks < 1:
            raise InvalidSpec("hessian_blocks must be positive")
        if self.log_std < 0 or self.rhs_noise < 0:
            raise InvalidSpec("noise parameters must be nonnegative")

    def dimensions(self) -> dict[str, int]:
        """Problem size bookkeeping without building any matrix."""
        second_stage = self.P * self.nx
        partition_cons = self.P * self.m
        coupling_cons = self.P * self.nz
        return {
            "second_stage_variables": second_stage,
            "first_stage_variables": self.nz,
            "total_variables": second_stage + self.nz,
            "partition_constraints": partition_cons,
            "coupling_constraints": coupling_cons,
            "total_constraints": partition_cons + coupling_cons,
        }


def random_spd_block(rng: np.random.Generator, k: int, log_std: float) -> np.ndarray:
    """``Q diag(exp(log_std * N(0,1))) Q'`` with ``Q`` from a Gaussian QR."""
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    Q = Q * np.sign(np.diag(R))
    eig = np.exp(log_std * rng.standard_normal(k))
    M = (Q * eig) @ Q.T
    return 0.5 * (M + M.T)


def gen_stochastic_qp(spec: StochasticQpSpec) -> BlockQP:
    """Build the two-stage stochastic QP.

    Every scenario shares ``D``, ``c`` and ``J``; ``b_i`` is the nominal ``b``
    plus ``N(0, (rhs_noise * |b|)^2)`` noise; ``A_i`` selects the first ``nz``
    variables and ``B_i = -I``.
    """
    nx, m, nz = spec.nx, spec.m, spec.nz
    rng = rng_stream(spec.seed, *STREAM_HESSIAN)
    sizes = [len(s) for s in np.array_split(np.arange(nx), min(spec.hessian_blocks, nx))]
    D = SparseMatrix(
        sp.block_diag([random_spd_block(rng, k, spec.log_std) for k in sizes], format="csc"),
        symmetric=True,
    )
    c = rng_stream(spec.seed, *STREAM_COST).standard_normal(nx)

    rng = rng_stream(spec.seed, *STREAM_JACOBIAN)
    for _ in range(100):
        Jd = rng.standard_normal((m, nx))
        # rows of J restricted to the non-coupled columns must be independent
        if m == 0 or np.linalg.matrix_rank(Jd[:, nz:]) == m:
            break
    else:  # pragma: no cover - probability zero
        raise InvalidSpec("could not draw a full-rank J")
    J = SparseMatrix(Jd)
    b = rng_stream(spec.seed, *STREAM_RHS).standard_normal(m)

    A = SparseMatrix(sp.eye(nz, nx, format="csc"))
    B = SparseMatrix(-sp.identity(nz, format="csc"))
    parts = []
    for i in range(spec.P):
        noise = rng_stream(spec.seed, STREAM_SCENARIO, i).standard_normal(m)
        b_i = b + spec.rhs_noise * np.abs(b) * noise
        parts.append(Partition(D, c, J, b_i, A, B))
    return BlockQP(tuple(parts), nz)


def random_block_qp(
    seed: int,
    P: int | None = None,
    max_nx: int = 15,
    max_nz: int = 6,
    max_m: int = 4,
) -> BlockQP:
    """Small dense instance with independent data per partition.

    Used for verification. Dimensions are drawn from the seed when not
    given; every partition has ``m_i + l_i <= n_x_i`` so that ``K_s_i`` is
    nonsingular, and the total coupling rank covers ``n_z`` so that
    ``Sigma`` is positive definite.
    """
    rng = rng_stream(seed, 6)
    P = int(rng.integers(1, 5)) if P is None else P
    if P < 1 or max_nz < 1:
        raise InvalidSpec("need P >= 1 and max_nz >= 1")
    nz = int(rng.integers(1, max_nz + 1))
    ls = rng.integers(1, nz + 1, size=P)
    if ls.sum() < nz:
        ls[-1] = nz
    parts = []
    for l in ls:
        m = int(rng.integers(0, max_m + 1))
        lo = int(l) + m + 1
        if lo > max_nx:
            raise InvalidSpec(f"max_nx={max_nx} too small for m={m}, l={l}")
        nx = int(rng.integers(lo, max_nx + 1))
        G = rng.standard_normal((nx, nx))
        D = G @ G.T / nx + 0.5 * np.eye(nx)
        parts.append(
            Partition.build(
                D,
                rng.standard_normal(nx),
                rng.standard_normal((l, nx)),
                rng.standard_normal((l, nz)),
                J=rng.standard_normal((m, nx)),
                b=rng.standard_normal(m),
            )
        )
    return BlockQP(tuple(parts), nz)


# ---------------------------------------------------------------------------
# Power networks


@dataclass
class PowerNetwork:
    """DC network. Loads and dispatch are per unit; ``x`` is line reactance."""

    bus_ids: list
    loads: np.ndarray
    lines: list[tuple[int, int, float]]
    gen_ids: list
    gen_bus: list[int]
    reference_bus: int
    dispatch: np.ndarray | None = None
    weights: dict[str, float] = field(default_factory=lambda: {"gen": 1.0, "line": 1.0, "bus": 1.0})

    def __post_init__(self):
        self.loads = np.asarray(self.loads, dtype=float)
        nb = len(self.bus_ids)
        if nb == 0:
            raise InvalidNetwork("network has no buses")
        if not 0 <= self.reference_bus < nb:
            raise InvalidNetwork("reference bus not in network")
        for i, j, x in self.lines:
            if x <= 0:
                raise InvalidNetwork("nonpositive reactance")
            if not (0 <= i < nb and 0 <= j < nb) or i == j:
                raise InvalidNetwork(f"bad line endpoints ({i}, {j})")
        for w in self.weights.values():
            if w <= 0:
                raise InvalidNetwork("objective weights must be positive")
        if not self.gen_ids:
            raise InvalidNetwork("network has no generators")
        if not self.is_connected():
            raise DisconnectedNetwork("network is not connected")

    @property
    def n_bus(self) -> int:
        return len(self.bus_ids)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def n_gen(self) -> int:
        return len(self.gen_ids)

    def is_connected(self) -> bool:
        adj = [[] for _ in range(self.n_bus)]
        for i, j, _ in self.lines:
            adj[i].append(j)
            adj[j].append(i)
        seen = {self.reference_bus}
        todo = deque(seen)
        while todo:
            k = todo.popleft()
            for nb in adj[k]:
                if nb not in seen:
                    seen.add(nb)
                    todo.append(nb)
        return len(seen) == self.n_bus

    def incidence(self) -> sp.csr_matrix:
        """Line-bus incidence: ``+1`` at the from bus, ``-1`` at the to bus."""
        rows, cols, vals = [], [], []
        for k, (i, j, _) in enumerate(self.lines):
            rows += [k, k]
            cols += [i, j]
            vals += [1.0, -1.0]
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_line, self.n_bus))

    def gen_map(self) -> sp.csr_matrix:
        """Bus-generator map (``n_bus x n_gen``)."""
        return sp.csr_matrix(
            (np.ones(self.n_gen), (self.gen_bus, np.arange(self.n_gen))),
            shape=(self.n_bus, self.n_gen),
        )

    def default_dispatch(self) -> np.ndarray:
        """File dispatch if given, else total load split evenly across generators."""
        if self.dispatch is not None:
            return np.asarray(self.dispatch, dtype=float)
        return np.full(self.n_gen, self.loads.sum() / self.n_gen)


@dataclass
class SetpointNominal:
    PG: np.ndarray
    PF: np.ndarray
    theta: np.ndarray


def dc_power_flow(net: PowerNetwork, dispatch: np.ndarray | None = None) -> SetpointNominal:
    """Lossless DC power flow with ``theta_ref = 0``.

    Raises:
        ImbalancedDispatch: generation and load differ by more than 1e-9.
        DisconnectedNetwork: the network is not connected.
    """
    PG = net.default_dispatch() if dispatch is None else np.asarray(dispatch, dtype=float)
    if PG.shape != (net.n_gen,):
        raise InvalidNetwork(f"dispatch has shape {PG.shape}, expected ({net.n_gen},)")
    if abs(PG.sum() - net.loads.sum()) > 1e-9:
        raise ImbalancedDispatch(f"generation {PG.sum():.12g} != load {net.loads.sum():.12g}")
    if not net.is_connected():
        raise DisconnectedNetwork("network is not connected")
    Cl = net.incidence()
    xinv = sp.diags([1.0 / x for _, _, x in net.lines])
    Bbus = (Cl.T @ xinv @ Cl).tocsc()
    inj = net.gen_map() @ PG - net.loads
    keep = np.array([k for k in range(net.n_bus) if k != net.reference_bus], dtype=int)
    theta = np.zeros(net.n_bus)
    if keep.size:
        red = Bbus[keep][:, keep]
        f = factorize_sym_indef(SparseMatrix(red, symmetric=True))
        theta[keep] = f.solve(inj[keep])
    PF = xinv @ (Cl @ theta)
    return SetpointNominal(PG.copy(), np.asarray(PF), theta)


def build_setpoint_qp(
    net: PowerNetwork,
    nominal: SetpointNominal,
    P: int = 50,
    sigma_load: float = 0.05,
    seed: int = 0,
) -> BlockQP:
    """Two-stage set-point tracking QP over ``P`` load scenarios.

    Scenario variables are ``x_s = (P_G, P_F, theta)``. Constraints per
    scenario: bus balance at every non-reference bus, flow definitions, and
    ``theta_ref = 0``. The reference (slack) bus balance row is omitted, as in
    the standard DC power flow; otherwise the balance rows together with the
    coupling rows ``P_G,s = z`` would be linearly dependent.
    """
    if P < 1:
        raise InvalidNetwork("need at least one scenario")
    ng, nl, nb = net.n_gen, net.n_line, net.n_bus
    w = net.weights
    wvec = np.concatenate([np.full(ng, w["gen"]), np.full(nl, w["line"]), np.full(nb, w["bus"])])
    target = np.concatenate([nominal.PG, nominal.PF, nominal.theta])
    D = SparseMatrix(sp.diags(2.0 * wvec, format="csc"), symmetric=True)
    c = -2.0 * wvec * target

    Cl = net.incidence()
    keep = np.array([k for k in range(nb) if k != net.reference_bus], dtype=int)
    Cg = net.gen_map()
    # balance: Cg PG - Cl' PF = P_L on non-reference buses
    bal = sp.hstack([Cg, -Cl.T, sp.csr_matrix((nb, nb))]).tocsr()[keep]
    # flow: PF - diag(1/x) Cl theta = 0
    xinv = sp.diags([1.0 / x for _, _, x in net.lines])
    flow = sp.hstack([sp.csr_matrix((nl, ng)), sp.identity(nl), -xinv @ Cl])
    ref = sp.csr_matrix(([1.0], ([0], [ng + nl + net.reference_bus])), shape=(1, ng + nl + nb))
    J = SparseMatrix(sp.vstack([bal, flow, ref], format="csc"))
    A = SparseMatrix(sp.eye(ng, ng + nl + nb, format="csc"))
    B = SparseMatrix(-sp.identity(ng, format="csc"))

    loaded = net.loads != 0
    parts = []
    for s in range(P):
        noise = rng_stream(seed, STREAM_LOAD, s).standard_normal(nb)
        loads = net.loads * (1.0 + sigma_load * noise * loaded)
        b = np.concatenate([loads[keep], np.zeros(nl + 1)])
        parts.append(Partition(D, c, J, b, A, B))
    return BlockQP(tuple(parts), ng)


def setpoint_cost(qp: BlockQP, u) -> float:
    """Tracking cost ``sum_s w ||x_s - x_nominal||^2`` of a set-point QP.

    Equals ``qp.objective(u)`` plus the constant ``sum_s 1/2 c' D^{-1} c``
    (``D`` is diagonal here), so it is zero exactly at the nominal point.
    """
    vec = u.vec if hasattr(u, "vec") else np.asarray(u, dtype=float)
    total = 0.0
    for p, s in zip(qp.partitions, qp.layout.x):
        d = p.D.csc.diagonal()
        target = -p.c / d
        dev = vec[s] - target
        total += 0.5 * float(dev @ (d * dev))
    return total


def nominal_iterate(qp: BlockQP, nominal: SetpointNominal) -> np.ndarray:
    """Compact vector placing the nominal point in every scenario (zero duals)."""
    u = np.zeros(qp.dim)
    x = np.concatenate([nominal.PG, nominal.PF, nominal.theta])
    lay = qp.layout
    for i in range(qp.P):
        u[lay.x[i]] = x
    u[lay.z] = nominal.PG
    return u


# ---------------------------------------------------------------------------
# Network file format

_TOP_KEYS = {"buses", "lines", "generators", "reference_bus", "weights", "name"}


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing field '{key}'")
    return obj[key]


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ParseError(f"{where}: unknown field(s) {sorted(extra)}")


def network_from_dict(doc: dict) -> PowerNetwork:
    """Parse the network schema.

    ``{buses: [{id, load}], lines: [{from, to, x}], generators: [{id, bus,
    dispatch?}], reference_bus, weights?: {gen, line, bus}}``
    """
    _check_keys(doc, _TOP_KEYS, "network")
    buses = _require(doc, "buses", "network")
    ids, loads = [], []
    for k, b in enumerate(buses):
        _check_keys(b, {"id", "load"}, f"buses[{k}]")
        ids.append(_require(b, "id", f"buses[{k}]"))
        loads.append(float(b.get("load", 0.0)))
    if len(set(ids)) != len(ids):
        raise ParseError("buses: duplicate bus id")
    index = {bid: k for k, bid in enumerate(ids)}

    def bus_index(bid, where):
        if bid not in index:
            raise ParseError(f"{where}: unknown bus {bid!r}")
        return index[bid]

    lines = []
    for k, ln in enumerate(_require(doc, "lines", "network")):
        where = f"lines[{k}]"
        _check_keys(ln, {"from", "to", "x"}, where)
        x = float(_require(ln, "x", where))
        if x <= 0:
            raise ParseError(f"{where}.x: nonpositive reactance {x}")
        lines.append((bus_index(_require(ln, "from", where), where), bus_index(_require(ln, "to", where), where), x))

    gen_ids, gen_bus, dispatch = [], [], []
    for k, g in enumerate(_require(doc, "generators", "network")):
        where = f"generators[{k}]"
        _check_keys(g, {"id", "bus", "dispatch"}, where)
        gen_ids.append(_require(g, "id", where))
        gen_bus.append(bus_index(_require(g, "bus", where), where))
        dispatch.append(g.get("dispatch"))
    if any(d is None for d in dispatch) and not all(d is None for d in dispatch):
        raise ParseError("generators: dispatch must be given for all generators or none")

    ref = _require(doc, "reference_bus", "network")
    ref_idx = bus_index(ref, "reference_bus")
    weights = {"gen": 1.0, "line": 1.0, "bus": 1.0}
    if "weights" in doc:
        _check_keys(doc["weights"], set(weights), "weights")
        weights.update({k: float(v) for k, v in doc["weights"].items()})
    try:
        return PowerNetwork(
            bus_ids=ids,
            loads=np.array(loads),
            lines=lines,
            gen_ids=gen_ids,
            gen_bus=gen_bus,
            reference_bus=ref_idx,
            dispatch=None if dispatch and dispatch[0] is None else np.array(dispatch, dtype=float),
            weights=weights,
        )
    except InvalidNetwork as exc:
        raise ParseError(f"network: {exc}") from exc


def load_network(path: str | Path) -> PowerNetwork:
    """Read a network JSON file.

    Raises:
        ParseError: malformed JSON (with line/column) or schema violations.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return network_from_dict(doc)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def bundled_network(name: str = "case3") -> PowerNetwork:
    """Load one of the networks shipped in ``blocksolve/data``."""
    ref = resources.files("blocksolve") / "data" / f"{name}.json"
    with resources.as_file(ref) as path:
        return load_network(path)
