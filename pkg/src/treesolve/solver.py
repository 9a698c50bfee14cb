"""Direct solver for block tree-structured systems by level elimination.

The system couples each node only with its parent, so Gaussian elimination
can sweep whole BFS levels at once: an upward pass folds every child level
into its parent level via Schur complements, leaving a single root block,
and a downward pass back-substitutes from the root to the leaves.  With the
per-level update

    b_hat_c = -A_c^{-1} B_c          u_hat_c = A_c^{-1} u_c
    A_p    +=  sum_children C_c b_hat_c
    u_p    -=  sum_children C_c u_hat_c

followed by x_c = u_hat_c + b_hat_c x_parent, the whole solve costs O(total
nodes) block operations and 2(D-1)+1 sequential level steps for D levels.
Within a level all (batch, head, node) blocks are independent; parameters
are shared immutably, so concurrent solves are safe.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .linalg import PIVOT_RTOL, SingularBlockError, lu_factor, lu_solve
from .params import BlockGrads, LevelParams, TreeVector
from .topology import TreeTopology

__all__ = [
    "LevelData",
    "SolveState",
    "SolveStats",
    "segment_sum",
    "upward_step",
    "downward_step",
    "upward_sweep",
    "downward_sweep",
    "solve",
    "solve_with_stats",
    "solve_transpose",
    "transpose_params",
    "vjp",
]


class LevelData(NamedTuple):
    """Working data of one level during the sweeps; B/C are None at the root."""

    A: np.ndarray
    B: Optional[np.ndarray]
    C: Optional[np.ndarray]
    u: np.ndarray


class SolveState(NamedTuple):
    """Everything the upward pass retains for back-substitution.

    ``u_hat[l]`` and ``b_hat[l]`` hold, for each non-root level l, the
    modified right parts A_c^{-1} u_c and couplings -A_c^{-1} B_c, where A_c
    is the level's carry diagonal (already Schur-updated by the levels
    below).  ``root_matrix``/``root_rhs`` are the final carry: the root
    system left after every other level has been eliminated.
    """

    u_hat: tuple
    b_hat: tuple
    root_matrix: np.ndarray
    root_rhs: np.ndarray


@dataclass
class SolveStats:
    """Operation counters for one solve.

    level_steps counts sequential phases (each upward step, the root solve,
    each downward step).  block_ops counts small-block primitives (factor,
    triangular solve, multiply), one unit per (batch, head, node) block.
    aux_floats counts float64 values retained between the passes.
    """

    level_steps: int = 0
    block_ops: int = 0
    aux_floats: int = 0

    def count_blocks(self, shape) -> None:
        self.block_ops += int(np.prod(shape[:-2], dtype=np.int64))


def segment_sum(values: np.ndarray, sizes, axis: int) -> np.ndarray:
    """Sum contiguous groups of ``sizes`` along ``axis``; empty groups give 0."""
    sizes = np.asarray(sizes, dtype=np.int64)
    if np.all(sizes > 0):
        starts = np.zeros(len(sizes), dtype=np.int64)
        starts[1:] = np.cumsum(sizes[:-1])
        return np.add.reduceat(values, starts, axis=axis)
    ends = np.cumsum(sizes)
    csum = np.cumsum(values, axis=axis)
    zero = np.zeros_like(np.take(csum, [0], axis=axis))
    csum = np.concatenate([zero, csum], axis=axis)
    return np.take(csum, ends, axis=axis) - np.take(csum, ends - sizes, axis=axis)


def _factor_level(a, rtol, stats, level_1b):
    try:
        lu, perm = lu_factor(a, rtol)
    except SingularBlockError as e:
        e.level = level_1b
        e.head = e.block_index[0] + 1
        e.node = e.block_index[1] + 1
        raise
    if stats is not None:
        stats.count_blocks(a.shape)
    return lu, perm


def upward_step(carry: LevelData, parent: LevelData, split, *,
                rtol: float = PIVOT_RTOL, stats: Optional[SolveStats] = None,
                child_level: int = 0):
    """Eliminate one child level into its parent level.

    ``carry`` holds the child level (diagonal already Schur-updated by
    previous steps), ``parent`` the untouched parent level, ``split`` the
    child-group size per parent.  Returns the new parent-level carry
    (A_hat, B_p, C_p, u_hat) plus the retained (u_hat_c, b_hat_c) needed by
    the downward pass.
    """
    if carry.B is None or carry.C is None:
        raise ValueError("upward_step needs a child level with parent couplings")
    lu, perm = _factor_level(carry.A, rtol, stats, child_level + 1)
    b_hat = -lu_solve(lu, perm, carry.B)
    u_hat = lu_solve(lu, perm, carry.u)
    msg_a = carry.C @ b_hat
    msg_u = carry.C @ u_hat
    a_new = parent.A + segment_sum(msg_a, split, axis=1)
    u_new = parent.u - segment_sum(msg_u, split, axis=2)
    if stats is not None:
        stats.level_steps += 1
        for s in (b_hat, u_hat, msg_a, msg_u):
            stats.count_blocks(s.shape)
        stats.aux_floats += b_hat.size + u_hat.size
    return LevelData(a_new, parent.B, parent.C, u_new), (u_hat, b_hat)


def downward_step(u_hat: np.ndarray, b_hat: np.ndarray, x_parent: np.ndarray,
                  split, stats: Optional[SolveStats] = None) -> np.ndarray:
    """Recover a child level from its parent solutions: x_c = u_hat_c + b_hat_c x_p."""
    x_up = np.repeat(x_parent, np.asarray(split, dtype=np.int64), axis=2)
    x = u_hat + b_hat @ x_up
    if stats is not None:
        stats.level_steps += 1
        stats.count_blocks(x.shape)
    return x


def _validate(params: LevelParams, tree: TreeTopology, u: TreeVector) -> None:
    params.validate_for(tree)
    if u.depth != tree.depth:
        raise ValueError(f"right part has {u.depth} levels, tree has {tree.depth}")
    if u.heads != params.heads:
        raise ValueError(f"right part heads {u.heads} != parameter heads {params.heads}")
    if u.node_counts != tree.level_sizes:
        raise ValueError(
            f"right part node counts {u.node_counts} do not match tree {tree.level_sizes}"
        )
    if u.block_sizes != params.block_sizes:
        raise ValueError(
            f"right part block sizes {u.block_sizes} != parameter blocks {params.block_sizes}"
        )


def upward_sweep(params: LevelParams, tree: TreeTopology, u: TreeVector, *,
                 rtol: float = PIVOT_RTOL,
                 stats: Optional[SolveStats] = None) -> SolveState:
    """Eliminate every level into its parent, leaf to root."""
    _validate(params, tree, u)
    depth = tree.depth

    def level_data(l):
        has_up = l < depth - 1
        return LevelData(params.A[l], params.B[l] if has_up else None,
                         params.C[l] if has_up else None, u.levels[l])

    carry = level_data(0)
    u_hats, b_hats = [], []
    for l in range(1, depth):
        carry, (u_hat, b_hat) = upward_step(carry, level_data(l),
                                            tree.splits(l - 1), rtol=rtol,
                                            stats=stats, child_level=l - 1)
        u_hats.append(u_hat)
        b_hats.append(b_hat)
    return SolveState(tuple(u_hats), tuple(b_hats), carry.A, carry.u)


def downward_sweep(state: SolveState, tree: TreeTopology, *,
                   rtol: float = PIVOT_RTOL,
                   stats: Optional[SolveStats] = None) -> TreeVector:
    """Solve the root system and back-substitute down to the leaves."""
    lu, perm = _factor_level(state.root_matrix, rtol, stats, tree.depth)
    x = lu_solve(lu, perm, state.root_rhs)
    if stats is not None:
        stats.level_steps += 1
        stats.count_blocks(x.shape)
    xs = [x]
    for l in range(tree.depth - 2, -1, -1):
        xs.insert(0, downward_step(state.u_hat[l], state.b_hat[l], xs[0],
                                   tree.splits(l), stats))
    return TreeVector(tuple(xs))


def solve(params: LevelParams, tree: TreeTopology, u: TreeVector, *,
          rtol: float = PIVOT_RTOL) -> TreeVector:
    """Solve the block tree system for ``u``; returns x shaped like ``u``.

    Raises :class:`SingularBlockError` (naming the 1-based level and node)
    when a diagonal pivot block degenerates during elimination.
    """
    return downward_sweep(upward_sweep(params, tree, u, rtol=rtol), tree,
                          rtol=rtol)


def solve_with_stats(params: LevelParams, tree: TreeTopology, u: TreeVector, *,
                     rtol: float = PIVOT_RTOL):
    """Like :func:`solve`, also returning operation counters."""
    stats = SolveStats()
    state = upward_sweep(params, tree, u, rtol=rtol, stats=stats)
    x = downward_sweep(state, tree, rtol=rtol, stats=stats)
    return x, stats


def transpose_params(params: LevelParams) -> LevelParams:
    """Parameters of the transposed system: A -> A^T and B/C swap transposed."""
    return LevelParams(
        tuple(a.swapaxes(-1, -2) for a in params.A),
        tuple(c.swapaxes(-1, -2) for c in params.C),
        tuple(b.swapaxes(-1, -2) for b in params.B),
    )


def solve_transpose(params: LevelParams, tree: TreeTopology, g: TreeVector, *,
                    rtol: float = PIVOT_RTOL) -> TreeVector:
    """Solve the transposed system for a cotangent-shaped right part g."""
    return solve(transpose_params(params), tree, g, rtol=rtol)


def vjp(params: LevelParams, tree: TreeTopology, u: TreeVector, x: TreeVector,
        g: TreeVector, *, rtol: float = PIVOT_RTOL):
    """Pull a cotangent of the solution back onto the right part and every block.

    Given x = solve(params, tree, u) and g = dL/dx, one transpose solve gives
    y = dL/du; the block cotangents are minus the outer products of y's block
    row with x's block column, summed over batch and right-part columns:
    dL/dA_v = -y_v x_v^T, dL/dB_v = -y_v x_{parent}^T, dL/dC_v = -y_{parent} x_v^T.
    Nothing is recomputed beyond the single transpose solve.
    """
    _validate(params, tree, u)
    _validate(params, tree, g)
    if x.node_counts != u.node_counts or x.block_sizes != u.block_sizes:
        raise ValueError("cached solution does not match the right part's structure")
    y = solve_transpose(params, tree, g, rtol=rtol)
    grad_A, grad_B, grad_C = [], [], []
    for l in range(tree.depth):
        grad_A.append(-np.einsum("bhnir,bhnjr->hnij", y.levels[l], x.levels[l]))
        if l < tree.depth - 1:
            parent = tree.parent_indices(l)
            x_up = x.levels[l + 1][:, :, parent]
            y_up = y.levels[l + 1][:, :, parent]
            grad_B.append(-np.einsum("bhnir,bhnjr->hnij", y.levels[l], x_up))
            grad_C.append(-np.einsum("bhnir,bhnjr->hnij", y_up, x.levels[l]))
    return y, BlockGrads(tuple(grad_A), tuple(grad_B), tuple(grad_C))
