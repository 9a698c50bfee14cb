"""Batched LU factorization with partial pivoting for stacks of small blocks.

All leading axes index independent blocks; the factorization loops only over
the (small) block dimension and is vectorized across the stack.  A block is
declared singular when a pivot falls below PIVOT_RTOL times the block's
largest entry magnitude.
"""

import numpy as np

__all__ = ["PIVOT_RTOL", "SingularBlockError", "lu_factor", "lu_solve", "solve_blocks"]

PIVOT_RTOL = 1e-12


class SingularBlockError(np.linalg.LinAlgError):
    """A diagonal block has no usable pivot.

    ``block_index`` locates the offending block within the stack's leading
    axes.  The tree solver fills in ``level``/``node``/``head`` (all 1-based)
    when the block belongs to a level array.
    """

    def __init__(self, block_index: tuple, pivot_step: int):
        super().__init__()
        self.block_index = block_index
        self.pivot_step = pivot_step
        self.level = None
        self.node = None
        self.head = None

    def __str__(self) -> str:
        if self.level is not None:
            where = f"level {self.level}, node {self.node}"
            if self.head is not None:
                where += f", head {self.head}"
        else:
            where = f"block {self.block_index}"
        return f"singular diagonal block at {where} (pivot step {self.pivot_step})"


def lu_factor(a: np.ndarray, rtol: float = PIVOT_RTOL):
    """Factor a stack of square blocks, P A = L U.

    Returns ``(lu, perm)`` where ``lu`` packs the unit-lower and upper factors
    and ``perm[..., i]`` is the original row that ended up at position ``i``.
    Raises :class:`SingularBlockError` on the first block whose pivot falls
    below ``rtol`` times the block's max absolute entry.
    """
    lu = np.array(a, dtype=np.float64)
    if lu.ndim < 2 or lu.shape[-1] != lu.shape[-2]:
        raise ValueError(f"expected a stack of square blocks, got shape {lu.shape}")
    lead = lu.shape[:-2]
    d = lu.shape[-1]
    perm = np.broadcast_to(np.arange(d), lead + (d,)).copy()
    scale = np.max(np.abs(lu), axis=(-2, -1))
    for k in range(d):
        col = np.abs(lu[..., k:, k])
        rel = np.argmax(col, axis=-1)
        pivmag = np.take_along_axis(col, rel[..., None], axis=-1)[..., 0]
        bad = pivmag <= rtol * scale
        if np.any(bad):
            flat = int(np.argmax(bad.reshape(-1)))
            index = np.unravel_index(flat, lead) if lead else ()
            raise SingularBlockError(tuple(int(i) for i in index), k)
        pos = rel + k
        # swap rows k <-> pos (identity where pos == k), vectorized over the stack
        pidx = np.broadcast_to(pos[..., None, None], lead + (1, d))
        row_p = np.take_along_axis(lu, pidx, axis=-2)
        row_k = lu[..., k : k + 1, :].copy()
        np.put_along_axis(lu, pidx, row_k, axis=-2)
        lu[..., k, :] = row_p[..., 0, :]
        perm_p = np.take_along_axis(perm, pos[..., None], axis=-1)
        perm_k = perm[..., k].copy()
        np.put_along_axis(perm, pos[..., None], perm_k[..., None], axis=-1)
        perm[..., k] = perm_p[..., 0]
        if k + 1 < d:
            lu[..., k + 1 :, k] /= lu[..., k, k][..., None]
            lu[..., k + 1 :, k + 1 :] -= lu[..., k + 1 :, k : k + 1] * lu[..., k : k + 1, k + 1 :]
    return lu, perm


def lu_solve(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A X = B from an lu_factor result; leading axes broadcast."""
    d = lu.shape[-1]
    if b.shape[-2] != d:
        raise ValueError(f"rhs rows {b.shape[-2]} do not match block size {d}")
    lead = np.broadcast_shapes(lu.shape[:-2], b.shape[:-2])
    lu_b = np.broadcast_to(lu, lead + (d, d))
    idx = np.broadcast_to(perm[..., :, None], lead + (d, b.shape[-1]))
    x = np.take_along_axis(np.broadcast_to(b, lead + b.shape[-2:]), idx, axis=-2)
    for i in range(1, d):
        x[..., i, :] -= (lu_b[..., i : i + 1, :i] @ x[..., :i, :])[..., 0, :]
    for i in range(d - 1, -1, -1):
        if i + 1 < d:
            x[..., i, :] -= (lu_b[..., i : i + 1, i + 1 :] @ x[..., i + 1 :, :])[..., 0, :]
        x[..., i, :] /= lu_b[..., i, i][..., None]
    return x


def solve_blocks(a: np.ndarray, b: np.ndarray, rtol: float = PIVOT_RTOL) -> np.ndarray:
    """One-shot blockwise solve, factoring ``a`` on the fly."""
    lu, perm = lu_factor(a, rtol)
    return lu_solve(lu, perm, b)
