"""treesolve: direct solves of block tree-structured linear systems.

Systems whose block sparsity follows a rooted tree (each node coupled only
with its parent) are solved exactly by one leaf-to-root elimination pass and
one root-to-leaf substitution pass: linear work in the node count and as
many sequential steps as the tree has levels.  The package bundles the level
solver, transpose solves and adjoint gradients, chain/state-recurrence
reductions, quadtree and flattening-order utilities, a dense reference
oracle, and a problem-file CLI.
"""

from .linalg import PIVOT_RTOL, SingularBlockError
from .layer import (LayerConfig, aggregate_topk, bidirectional_chain_forward,
                    build_input, forward)
from .oracle import (BidiagonalFactors, DenseSystem, assemble_dense,
                     bidiagonal_solve, chain_inverse_entry,
                     chain_tridiagonal_blocks, dense_solve, finite_diff_grad,
                     ssm_reference, tridiag_bidiagonal_factor)
from .params import (BlockGrads, LevelParams, TreeVector, apply_gauge,
                     init_random_stable, scale_rhs, ssm_to_chain)
from .problem_io import FORMAT_VERSION, read_problem, write_problem
from .solver import (LevelData, SolveState, SolveStats, downward_step,
                     downward_sweep, segment_sum, solve, solve_transpose,
                     solve_with_stats, transpose_params, upward_step,
                     upward_sweep, vjp)
from .topology import (GridShape, TreeTopology, build_chain,
                       build_perfect_tree, build_quadtree, dfs_postorder_perm,
                       flatten_image, morton_index, order_indices, snake_index)

__version__ = "0.1.0"

__all__ = [
    "PIVOT_RTOL", "SingularBlockError",
    "LayerConfig", "aggregate_topk", "bidirectional_chain_forward",
    "build_input", "forward",
    "BidiagonalFactors", "DenseSystem", "assemble_dense", "bidiagonal_solve",
    "chain_inverse_entry", "chain_tridiagonal_blocks", "dense_solve",
    "finite_diff_grad", "ssm_reference", "tridiag_bidiagonal_factor",
    "BlockGrads", "LevelParams", "TreeVector", "apply_gauge",
    "init_random_stable", "scale_rhs", "ssm_to_chain",
    "FORMAT_VERSION", "read_problem", "write_problem",
    "LevelData", "SolveState", "SolveStats", "downward_step", "downward_sweep",
    "segment_sum", "solve", "solve_transpose", "solve_with_stats",
    "transpose_params", "upward_step", "upward_sweep", "vjp",
    "GridShape", "TreeTopology", "build_chain", "build_perfect_tree",
    "build_quadtree", "dfs_postorder_perm", "flatten_image", "morton_index",
    "order_indices", "snake_index",
    "__version__",
]
