"""Minimum-residual solvers for 2x2 block partitioned linear systems.

The package implements GPMR, the orthogonal Hessenberg reduction it is
built on, GMRES and Block-GMRES baselines, block-Jacobi preconditioning
and a small sparse-matrix toolkit, plus a command-line harness for
convergence experiments on Matrix Market inputs.
"""

from .baselines import (
    ArnoldiState,
    BlockArnoldiState,
    block_arnoldi_init,
    block_arnoldi_step,
    block_gmres_solve,
    gmres_solve,
)
from .hessenberg import (
    HessenbergState,
    ReductionExhaustedError,
    hessenberg_init,
    hessenberg_step,
)
from .operators import (
    BlockJacobiPreconditioner,
    BlockSplit,
    GraphPartitionError,
    LinearOperator,
    PartitionedSystem,
    PreconditionerError,
    bisect_graph,
    build_preconditioned_system,
    extract_blocks,
    read_permutation,
    recover_solution,
    write_permutation,
)
from .solver import (
    GpmrWorkspace,
    SingularSubproblemError,
    SolveReport,
    backward_substitution,
    givens,
    gpmr_solve,
    ref,
)
from .sparse import (
    IndexOutOfRangeError,
    LUFactors,
    MalformedEntryError,
    MalformedHeaderError,
    MatrixMarketError,
    SingularMatrixError,
    SparseMatrix,
    UnsupportedFormatError,
    csr_from_coo,
    csr_from_dense,
    csr_identity,
    load_matrix_market,
    lu_solve,
    parse_matrix_market,
    sparse_lu,
    spmv,
    spmv_transpose,
    write_matrix_market,
)

__all__ = [
    "ArnoldiState",
    "BlockArnoldiState",
    "BlockJacobiPreconditioner",
    "BlockSplit",
    "GpmrWorkspace",
    "GraphPartitionError",
    "HessenbergState",
    "IndexOutOfRangeError",
    "LUFactors",
    "LinearOperator",
    "MalformedEntryError",
    "MalformedHeaderError",
    "MatrixMarketError",
    "PartitionedSystem",
    "PreconditionerError",
    "ReductionExhaustedError",
    "SingularMatrixError",
    "SingularSubproblemError",
    "SolveReport",
    "SparseMatrix",
    "UnsupportedFormatError",
    "backward_substitution",
    "bisect_graph",
    "block_arnoldi_init",
    "block_arnoldi_step",
    "block_gmres_solve",
    "build_preconditioned_system",
    "csr_from_coo",
    "csr_from_dense",
    "csr_identity",
    "extract_blocks",
    "givens",
    "gmres_solve",
    "gpmr_solve",
    "hessenberg_init",
    "hessenberg_step",
    "load_matrix_market",
    "lu_solve",
    "parse_matrix_market",
    "read_permutation",
    "recover_solution",
    "ref",
    "sparse_lu",
    "spmv",
    "spmv_transpose",
    "write_matrix_market",
    "write_permutation",
]
