"""Solvers for block-structured QP KKT systems.

Schur complement decomposition, ADMM, and ADMM-preconditioned GMRES over a
shared sparse data model, plus generators for stochastic and power-network
benchmark problems.
"""

from .admm import AdmmFactors, AdmmSettings, admm_setup, admm_solve, admm_step
from .exceptions import (
    BlockSolveError,
    Breakdown,
    DimensionCap,
    DimensionMismatch,
    DisconnectedNetwork,
    ImbalancedDispatch,
    InvalidNetwork,
    InvalidSpec,
    NonlinearOperator,
    NotPositiveDefinite,
    ParseError,
    SingularMatrix,
)
from .krylov import GmresSettings, LinearOperator, gmres
from .model import (
    BlockQP,
    Iterate,
    KktSystem,
    Partition,
    assemble_kkt,
    assemble_regularized_kkt,
    assemble_schur_permuted,
    kkt_residual,
    load_qp,
    make_qp,
    save_qp,
    validate,
)
from .precond import (
    TRhoOperator,
    admm_gmres_solve,
    build_dense_splitting,
    make_trho_operator,
    richardson_solve,
)
from .problems import (
    PowerNetwork,
    StochasticQpSpec,
    build_setpoint_qp,
    bundled_network,
    dc_power_flow,
    gen_stochastic_qp,
    load_network,
    random_block_qp,
)
from .report import SolveReport, Status
from .schur import direct_solve, schur_solve
from .solvers import METHODS, SolveOptions, gmres_solve, solve
from .sparse import SparseMatrix, factorize_spd, factorize_sym_indef, solve_factored

__version__ = "0.1.0"
