"""Per-level block parameters and right-hand sides, with parameter transforms.

Shape conventions (0-based level l, D levels, H heads):

* ``A[l]``: (H, n_l, d_l, d_l) diagonal blocks, one per node.
* ``B[l]``: (H, n_l, d_l, d_{l+1}) for l < D-1; couples the parent's value
  into the node's own equation (sits in the node's block row).
* ``C[l]``: (H, n_l, d_{l+1}, d_l) for l < D-1; couples the node's value into
  its parent's equation (sits in the parent's block row).
* right parts: (batch, H, n_l, d_l, r) with r simultaneous columns.

Parameter containers are immutable: all transforms return new values.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .linalg import lu_factor, lu_solve
from .topology import TreeTopology

__all__ = [
    "LevelParams",
    "TreeVector",
    "BlockGrads",
    "init_random_stable",
    "apply_gauge",
    "scale_rhs",
    "ssm_to_chain",
]


def _frozen_f64(a, name):
    arr = np.array(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LevelParams:
    """Block parameters of one tree system, stored per level.

    ``A`` has one array per level; ``B`` and ``C`` have one per non-root
    level.  Invertibility of the A blocks is not checked here; the solver
    rejects blocks whose pivots degenerate.
    """

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    C: tuple[np.ndarray, ...]

    def __post_init__(self):
        A = tuple(_frozen_f64(a, f"A[{l}]") for l, a in enumerate(self.A))
        B = tuple(_frozen_f64(b, f"B[{l}]") for l, b in enumerate(self.B))
        C = tuple(_frozen_f64(c, f"C[{l}]") for l, c in enumerate(self.C))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if not A:
            raise ValueError("need at least one level of A blocks")
        if len(B) != len(A) - 1 or len(C) != len(A) - 1:
            raise ValueError(
                f"expected {len(A) - 1} coupling levels, got {len(B)} B and {len(C)} C"
            )
        heads = A[0].shape[0]
        for l, a in enumerate(A):
            if a.ndim != 4 or a.shape[-1] != a.shape[-2] or min(a.shape) < 1:
                raise ValueError(f"A[{l}] must be (heads, nodes, d, d), got {a.shape}")
            if a.shape[0] != heads:
                raise ValueError(f"A[{l}] head count {a.shape[0]} != {heads}")
        for l, (b, c) in enumerate(zip(B, C)):
            d_l, d_up = A[l].shape[-1], A[l + 1].shape[-1]
            n_l = A[l].shape[1]
            if b.shape != (heads, n_l, d_l, d_up):
                raise ValueError(
                    f"B[{l}] shape {b.shape} != expected {(heads, n_l, d_l, d_up)}"
                )
            if c.shape != (heads, n_l, d_up, d_l):
                raise ValueError(
                    f"C[{l}] shape {c.shape} != expected {(heads, n_l, d_up, d_l)}"
                )

    @property
    def depth(self) -> int:
        return len(self.A)

    @property
    def heads(self) -> int:
        return self.A[0].shape[0]

    @property
    def node_counts(self) -> tuple[int, ...]:
        return tuple(a.shape[1] for a in self.A)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(a.shape[-1] for a in self.A)

    def validate_for(self, tree: TreeTopology) -> None:
        if self.node_counts != tree.level_sizes:
            raise ValueError(
                f"parameter node counts {self.node_counts} do not match "
                f"tree levels {tree.level_sizes}"
            )


@dataclass(frozen=True)
class TreeVector:
    """Level-structured stack of per-node vectors (inputs, right parts, solutions).

    Each entry of ``levels`` has shape (batch, heads, n_l, d_l, r); batch,
    heads and r agree across levels.
    """

    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        levels = tuple(np.asarray(v, dtype=np.float64) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("need at least one level")
        b, h, _, _, r = levels[0].shape if levels[0].ndim == 5 else (None,) * 5
        for l, v in enumerate(levels):
            if v.ndim != 5 or min(v.shape) < 1:
                raise ValueError(
                    f"level {l + 1} must be (batch, heads, nodes, d, r) with "
                    f"positive sizes, got shape {v.shape}"
                )
            if v.shape[0] != b or v.shape[1] != h or v.shape[4] != r:
                raise ValueError(
                    f"level {l + 1} batch/heads/right-part dims {v.shape} "
                    f"disagree with level 1 {levels[0].shape}"
                )

    @classmethod
    def zeros(cls, tree: TreeTopology, block_sizes: Sequence[int], heads: int = 1,
              batch: int = 1, right_parts: int = 1) -> "TreeVector":
        return cls(tuple(
            np.zeros((batch, heads, n, d, right_parts))
            for n, d in zip(tree.level_sizes, block_sizes)
        ))

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def batch(self) -> int:
        return self.levels[0].shape[0]

    @property
    def heads(self) -> int:
        return self.levels[0].shape[1]

    @property
    def right_parts(self) -> int:
        return self.levels[0].shape[4]

    @property
    def node_counts(self) -> tuple[int, ...]:
        return tuple(v.shape[2] for v in self.levels)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(v.shape[3] for v in self.levels)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) if v.size else 0.0 for v in self.levels)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "TreeVector":
        return TreeVector(tuple(fn(v) for v in self.levels))

    def __add__(self, other: "TreeVector") -> "TreeVector":
        return TreeVector(tuple(a + b for a, b in zip(self.levels, other.levels)))

    def __sub__(self, other: "TreeVector") -> "TreeVector":
        return TreeVector(tuple(a - b for a, b in zip(self.levels, other.levels)))

    def __mul__(self, scalar: float) -> "TreeVector":
        return TreeVector(tuple(v * scalar for v in self.levels))

    __rmul__ = __mul__


class BlockGrads(NamedTuple):
    """Cotangents for every A/B/C block, shaped like the parameter arrays."""

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    C: tuple[np.ndarray, ...]


def _block_size_list(block_sizes, depth: int) -> list[int]:
    if np.isscalar(block_sizes):
        return [int(block_sizes)] * depth
    sizes = [int(d) for d in block_sizes]
    if len(sizes) != depth:
        raise ValueError(f"expected {depth} block sizes, got {len(sizes)}")
    if any(d < 1 for d in sizes):
        raise ValueError(f"block sizes must be positive, got {sizes}")
    return sizes


def init_random_stable(tree: TreeTopology, block_sizes=1, heads: int = 1,
                       seed: int = 0, coupling_scale: float = 0.5) -> LevelParams:
    """Identity diagonal with bounded skew couplings: A = I, C = -B^T.

    B entries are i.i.d. uniform with magnitude at most
    ``coupling_scale / (k * d)`` where k is the largest child-group size at
    the transition and d the larger of the two adjacent block sizes.  With
    this parametrization every Schur complement met during elimination equals
    I plus a sum of Gram terms, so it stays symmetric positive definite and
    the solve cannot hit a degenerate pivot.  Deterministic in ``seed``.
    """
    if coupling_scale < 0:
        raise ValueError(f"coupling scale must be nonnegative, got {coupling_scale}")
    sizes = _block_size_list(block_sizes, tree.depth)
    rng = np.random.default_rng(seed)
    A = tuple(
        np.broadcast_to(np.eye(d), (heads, n, d, d)).copy()
        for n, d in zip(tree.level_sizes, sizes)
    )
    B, C = [], []
    for l in range(tree.depth - 1):
        n, d_l, d_up = tree.level_sizes[l], sizes[l], sizes[l + 1]
        k = max(int(s) for s in tree.split_sizes[l])
        bound = coupling_scale / (k * max(d_l, d_up))
        b = rng.uniform(-bound, bound, size=(heads, n, d_l, d_up))
        B.append(b)
        C.append(-b.swapaxes(-1, -2))
    return LevelParams(A, tuple(B), tuple(C))


def _as_gauge_levels(gauge, params: LevelParams) -> list[np.ndarray]:
    levels = [np.asarray(g, dtype=np.float64) for g in gauge]
    if len(levels) != params.depth:
        raise ValueError(f"expected {params.depth} gauge levels, got {len(levels)}")
    for l, g in enumerate(levels):
        if g.shape != params.A[l].shape:
            raise ValueError(
                f"gauge blocks at level {l + 1} have shape {g.shape}, "
                f"expected {params.A[l].shape}"
            )
    return levels


def apply_gauge(params: LevelParams, tree: TreeTopology, gauge) -> LevelParams:
    """Left-multiply every node's block row by the inverse of its gauge block.

    ``gauge`` holds one invertible block per node, shaped like ``params.A``.
    A_v and B_v live in node v's row; the C blocks stored at v live in the
    parent's row and are scaled by the parent's gauge.  Solving the rescaled
    system against :func:`scale_rhs`-rescaled right parts reproduces the
    original solution exactly.
    """
    params.validate_for(tree)
    levels = _as_gauge_levels(gauge, params)
    factors = []
    for l, g in enumerate(levels):
        try:
            factors.append(lu_factor(g))
        except np.linalg.LinAlgError as e:
            if hasattr(e, "block_index") and e.block_index:
                e.level = l + 1
                e.head = e.block_index[0] + 1
                e.node = e.block_index[1] + 1
            raise
    A = [lu_solve(lu, p, a) for (lu, p), a in zip(factors, params.A)]
    B, C = [], []
    for l in range(params.depth - 1):
        lu, p = factors[l]
        B.append(lu_solve(lu, p, params.B[l]))
        parent = tree.parent_indices(l)
        lu_up, p_up = factors[l + 1]
        C.append(lu_solve(lu_up[:, parent], p_up[:, parent], params.C[l]))
    return LevelParams(tuple(A), tuple(B), tuple(C))


def scale_rhs(u: TreeVector, gauge) -> TreeVector:
    """Apply the same per-node row scaling to a right-hand side: u_v -> D_v^{-1} u_v."""
    levels = [np.asarray(g, dtype=np.float64) for g in gauge]
    if len(levels) != u.depth:
        raise ValueError(f"expected {u.depth} gauge levels, got {len(levels)}")
    out = []
    for g, v in zip(levels, u.levels):
        lu, p = lu_factor(g)
        out.append(lu_solve(lu, p, v))
    return TreeVector(tuple(out))


def ssm_to_chain(interaction: np.ndarray, input_maps: np.ndarray) -> LevelParams:
    """Chain parameters whose solve reproduces a causal linear state recurrence.

    Given the recurrence x_1 = S_1 u_1, x_k = I_{k-1} x_{k-1} + S_k u_k with
    ``input_maps`` S (L, d, d) and ``interaction`` I (L-1, d, d), the chain
    gets diagonal blocks S_k^{-1}, subdiagonal blocks -S_{k+1}^{-1} I_k and no
    superdiagonal coupling.  All S_k must be invertible.
    """
    S = np.asarray(input_maps, dtype=np.float64)
    I = np.asarray(interaction, dtype=np.float64)
    if S.ndim != 3 or S.shape[-1] != S.shape[-2]:
        raise ValueError(f"input maps must be (L, d, d), got {S.shape}")
    L, d = S.shape[0], S.shape[-1]
    if I.shape != (L - 1, d, d) and not (L == 1 and I.size == 0):
        raise ValueError(f"interaction must be ({L - 1}, {d}, {d}), got {I.shape}")
    try:
        lu, p = lu_factor(S)
    except np.linalg.LinAlgError as e:
        if hasattr(e, "block_index") and e.block_index:
            raise ValueError(
                f"input map at position {e.block_index[0] + 1} is singular"
            ) from e
        raise
    eye = np.broadcast_to(np.eye(d), (L, d, d))
    A = lu_solve(lu, p, eye)
    sub = -lu_solve(lu[1:], p[1:], I) if L > 1 else np.zeros((0, d, d))
    A_levels = tuple(A[k].reshape(1, 1, d, d) for k in range(L))
    B_levels = tuple(np.zeros((1, 1, d, d)) for _ in range(L - 1))
    C_levels = tuple(sub[k].reshape(1, 1, d, d) for k in range(L - 1))
    return LevelParams(A_levels, B_levels, C_levels)
