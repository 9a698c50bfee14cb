"""Rooted-tree topologies stored as breadth-first levels, plus grid flattening orders.

Levels are numbered from the leaves: level 1 holds the leaves, level D the
single root.  Internally everything is 0-based; 1-based numbering is used in
documentation, error messages and file formats.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridShape",
    "TreeTopology",
    "build_perfect_tree",
    "build_quadtree",
    "build_chain",
    "morton_index",
    "snake_index",
    "order_indices",
    "flatten_image",
    "dfs_postorder_perm",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridShape:
    """Pixel grid dimensions. Quadtree/Morton use requires a 2^d x 2^d grid."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.height}x{self.width}")

    @property
    def pixels(self) -> int:
        return self.height * self.width

    def is_pow2_square(self) -> bool:
        return self.height == self.width and _is_power_of_two(self.height)


@dataclass(frozen=True)
class TreeTopology:
    """A rooted tree as per-level node counts and contiguous child groups.

    Attributes
    ----------
    level_sizes : tuple[int, ...]
        Node count per level, leaves first, root last.  The last entry is 1.
    split_sizes : tuple[tuple[int, ...], ...]
        ``split_sizes[l]`` lists, for every parent at level ``l+1`` (0-based),
        how many children it has at level ``l``, in breadth-first order.  The
        entries sum to ``level_sizes[l]``.  Children of a common parent are
        contiguous by construction; the representation cannot express
        anything else.
    arity : int | None
        Set when the tree was built as a perfect k-ary tree (used for the
        compact file-format encoding), None otherwise.
    """

    level_sizes: tuple[int, ...]
    split_sizes: tuple[tuple[int, ...], ...]
    arity: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "level_sizes", tuple(int(n) for n in self.level_sizes))
        object.__setattr__(
            self, "split_sizes", tuple(tuple(int(s) for s in grp) for grp in self.split_sizes)
        )
        if not self.level_sizes:
            raise ValueError("a tree needs at least one level")
        if any(n < 1 for n in self.level_sizes):
            raise ValueError(f"level sizes must be positive, got {self.level_sizes}")
        if self.level_sizes[-1] != 1:
            raise ValueError(f"root level must hold exactly one node, got {self.level_sizes[-1]}")
        if len(self.split_sizes) != len(self.level_sizes) - 1:
            raise ValueError(
                f"expected {len(self.level_sizes) - 1} split lists, got {len(self.split_sizes)}"
            )
        for l, groups in enumerate(self.split_sizes):
            if len(groups) != self.level_sizes[l + 1]:
                raise ValueError(
                    f"level {l + 2} has {self.level_sizes[l + 1]} parents "
                    f"but {len(groups)} split entries"
                )
            if any(s < 0 for s in groups):
                raise ValueError(f"negative child-group size at level {l + 2}")
            if sum(groups) != self.level_sizes[l]:
                raise ValueError(
                    f"split sizes at level {l + 2} sum to {sum(groups)}, "
                    f"expected {self.level_sizes[l]}"
                )

    @property
    def depth(self) -> int:
        """Number of BFS levels D."""
        return len(self.level_sizes)

    @property
    def total_nodes(self) -> int:
        return sum(self.level_sizes)

    def splits(self, child_level: int) -> np.ndarray:
        """Child-group sizes for the parents above 0-based level ``child_level``."""
        return np.asarray(self.split_sizes[child_level], dtype=np.int64)

    def parent_indices(self, child_level: int) -> np.ndarray:
        """Index within level ``child_level + 1`` of each node's parent."""
        sizes = self.splits(child_level)
        return np.repeat(np.arange(len(sizes)), sizes)

    def level_offsets(self) -> np.ndarray:
        """Global BFS offset of each level (length depth + 1)."""
        return np.concatenate([[0], np.cumsum(self.level_sizes)])


def build_perfect_tree(arity: int, leaf_count: int) -> TreeTopology:
    """Perfect k-ary tree: ``leaf_count`` must be a power of ``arity``.

    ``leaf_count = arity**d`` gives ``d + 1`` levels with sizes
    ``arity**d, arity**(d-1), ..., 1``.
    """
    if arity < 1:
        raise ValueError(f"arity must be a positive integer, got {arity}")
    if leaf_count < 1:
        raise ValueError(f"leaf count must be positive, got {leaf_count}")
    sizes = [leaf_count]
    n = leaf_count
    while n > 1:
        if arity == 1 or n % arity != 0:
            raise ValueError(f"leaf count {leaf_count} is not a power of arity {arity}")
        n //= arity
        sizes.append(n)
    splits = tuple(tuple([arity] * sizes[l + 1]) for l in range(len(sizes) - 1))
    return TreeTopology(tuple(sizes), splits, arity=arity)


def build_quadtree(grid: GridShape) -> TreeTopology:
    """Perfect 4-ary tree over a 2^d x 2^d grid.

    Leaf k (1-based, in BFS order) corresponds to the pixel with Morton index
    k, so aligned 2x2 pixel blocks share a parent, 4x4 blocks a grandparent,
    and so on.
    """
    if not grid.is_pow2_square():
        raise ValueError(
            f"quadtree requires a square power-of-two grid, got {grid.height}x{grid.width}"
        )
    return build_perfect_tree(4, grid.pixels)


def build_chain(length: int) -> TreeTopology:
    """Chain of ``length`` nodes: one node per level, leaf at one end, root at the other."""
    if length < 1:
        raise ValueError(f"chain length must be positive, got {length}")
    return TreeTopology((1,) * length, ((1,),) * (length - 1))


def _check_coords(x: int, y: int, grid: GridShape) -> None:
    if not (0 <= x < grid.width and 0 <= y < grid.height):
        raise ValueError(
            f"pixel ({x}, {y}) outside {grid.height}x{grid.width} grid"
        )


def morton_index(x: int, y: int, grid: GridShape) -> int:
    """1-based Z-order position of pixel (column x, row y).

    Bits of x and y are interleaved with x contributing the lower bit of each
    pair; on a 4x4 grid this is (x mod 2) + 2(y mod 2) + 4(x//2) + 8(y//2) + 1.
    """
    if not grid.is_pow2_square():
        raise ValueError(
            f"Morton order requires a square power-of-two grid, got {grid.height}x{grid.width}"
        )
    _check_coords(x, y, grid)
    code = 0
    bit = 0
    xx, yy = int(x), int(y)
    while xx or yy:
        code |= (xx & 1) << (2 * bit)
        code |= (yy & 1) << (2 * bit + 1)
        xx >>= 1
        yy >>= 1
        bit += 1
    return code + 1


def snake_index(x: int, y: int, grid: GridShape) -> int:
    """1-based boustrophedon position: even rows run left to right, odd rows reversed."""
    _check_coords(x, y, grid)
    if y % 2 == 0:
        return y * grid.width + x + 1
    return y * grid.width + (grid.width - x)


_ORDER_FNS = {"morton": morton_index, "snake": snake_index}


def order_indices(grid: GridShape, order: str) -> np.ndarray:
    """(height, width) array of 1-based positions under the given order."""
    try:
        fn = _ORDER_FNS[order]
    except KeyError:
        raise ValueError(f"unknown order {order!r}, expected one of {sorted(_ORDER_FNS)}")
    out = np.empty((grid.height, grid.width), dtype=np.int64)
    for y in range(grid.height):
        for x in range(grid.width):
            out[y, x] = fn(x, y, grid)
    return out


def flatten_image(image: np.ndarray, order: str = "morton") -> np.ndarray:
    """Reorder an (H, W, ...) pixel array into a (H*W, ...) sequence.

    Position ``k`` of the result holds the pixel whose 1-based order index is
    ``k + 1``; with ``order="morton"`` this is the leaf order of
    :func:`build_quadtree`.
    """
    image = np.asarray(image)
    if image.ndim < 2:
        raise ValueError("image must have at least two (row, column) axes")
    grid = GridShape(image.shape[0], image.shape[1])
    idx = order_indices(grid, order)
    out = np.empty((grid.pixels,) + image.shape[2:], dtype=image.dtype)
    out[idx.reshape(-1) - 1] = image.reshape((grid.pixels,) + image.shape[2:])
    return out


def dfs_postorder_perm(tree: TreeTopology) -> np.ndarray:
    """Map BFS node index to depth-first post-order position (both 0-based).

    Every node is placed after all nodes of its subtree; subtrees are visited
    in breadth-first child order.  For a chain this is the identity.
    """
    offsets = tree.level_offsets()
    child_starts = [
        np.concatenate([[0], np.cumsum(grp)]) for grp in tree.split_sizes
    ]
    perm = np.empty(tree.total_nodes, dtype=np.int64)
    counter = 0
    # stack entries: (level, index within level, next child slot)
    stack = [(tree.depth - 1, 0, 0)]
    while stack:
        level, idx, cursor = stack[-1]
        n_children = tree.split_sizes[level - 1][idx] if level > 0 else 0
        if cursor < n_children:
            stack[-1] = (level, idx, cursor + 1)
            child = int(child_starts[level - 1][idx]) + cursor
            stack.append((level - 1, child, 0))
        else:
            stack.pop()
            perm[offsets[level] + idx] = counter
            counter += 1
    return perm
