"""Command-line interface: generate, verify, benchmark, flatten, gradcheck.

Exit codes: 0 success, 1 usage error, 2 numerical failure (singular block),
3 verification failure.
"""

import argparse
import csv
import sys
import time

import numpy as np

from .oracle import assemble_dense, finite_diff_grad
from .params import TreeVector, init_random_stable
from .problem_io import read_problem, write_problem
from .solver import solve, solve_with_stats, vjp
from .topology import GridShape, build_perfect_tree, order_indices

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _ones_like(u: TreeVector) -> TreeVector:
    return TreeVector(tuple(np.ones_like(v) for v in u.levels))


def _rhs_rng(seed: int) -> np.random.Generator:
    # separate stream from the parameter init, still fully determined by seed
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))


def cmd_gen(args) -> int:
    tree = build_perfect_tree(args.arity, args.leaves)
    params = init_random_stable(
        tree, block_sizes=args.block_size, heads=args.heads,
        seed=args.seed, coupling_scale=args.gamma,
    )
    rng = _rhs_rng(args.seed)
    u = TreeVector(tuple(
        rng.standard_normal((args.batch, args.heads, n, args.block_size, args.rhs))
        for n in tree.level_sizes
    ))
    write_problem(args.out, tree, params, u)
    print(f"wrote {args.out}: {tree.total_nodes} nodes, depth {tree.depth}, "
          f"block size {args.block_size}, heads {args.heads}, "
          f"batch {args.batch}, right parts {args.rhs}")
    return EXIT_OK


def cmd_verify(args) -> int:
    tree, params, u = read_problem(args.infile)
    if tree.total_nodes > args.max_dense:
        raise _UsageError(
            f"problem has {tree.total_nodes} nodes, over the dense cap {args.max_dense}"
        )
    x = solve(params, tree, u)
    system = assemble_dense(params, tree, max_nodes=args.max_dense)
    x_ref = system.solve(u)
    scale = max(x_ref.max_abs(), np.finfo(np.float64).tiny)
    discrepancy = (x - x_ref).max_abs() / scale
    residual = system.residual(x, u)
    u_scale = max(u.max_abs(), np.finfo(np.float64).tiny)
    ok = discrepancy <= args.tol
    print(f"max relative discrepancy vs dense solve: {discrepancy:.3e}")
    print(f"residual (max abs): {residual:.3e} ({residual / u_scale:.3e} relative)")
    print(f"{'PASS' if ok else 'FAIL'} at tolerance {args.tol:g}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise _UsageError("no sizes given")
    rows = []
    for leaves in sizes:
        tree = build_perfect_tree(args.arity, leaves)
        params = init_random_stable(
            tree, block_sizes=args.block_size, seed=args.seed, coupling_scale=0.5
        )
        rng = _rhs_rng(args.seed)
        u = TreeVector(tuple(
            rng.standard_normal((1, 1, n, args.block_size, 1))
            for n in tree.level_sizes
        ))
        best = np.inf
        stats = None
        for _ in range(max(1, args.repeats)):
            t0 = time.perf_counter()
            _, stats = solve_with_stats(params, tree, u)
            best = min(best, time.perf_counter() - t0)
        rows.append({
            "L": leaves,
            "wall_time": f"{best:.6e}",
            "level_steps": stats.level_steps,
            "block_op_count": stats.block_ops,
        })
    with open(args.out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["L", "wall_time", "level_steps",
                                               "block_op_count"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out}: {len(rows)} rows")
    return EXIT_OK


def cmd_flatten(args) -> int:
    grid = GridShape(args.height, args.width)
    idx = order_indices(grid, args.order)
    with open(args.out, "w") as f:
        for y in range(grid.height):
            for x in range(grid.width):
                f.write(f"{x} {y} {idx[y, x]}\n")
    print(f"wrote {args.out}: {grid.pixels} pixels in {args.order} order")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    tree, params, u = read_problem(args.infile)
    n_entries = (sum(a.size for a in params.A) + sum(b.size for b in params.B)
                 + sum(c.size for c in params.C) + sum(v.size for v in u.levels))
    if n_entries > args.max_entries:
        raise _UsageError(
            f"{n_entries} differentiable entries exceed the gradcheck cap "
            f"{args.max_entries}; use a smaller problem"
        )
    x = solve(params, tree, u)
    grad_u, grads = vjp(params, tree, u, x, _ones_like(u))

    def total(sol: TreeVector) -> float:
        return float(sum(v.sum() for v in sol.levels))

    fd_u, fd_grads = finite_diff_grad(params, tree, u, total, eps=args.eps)

    def rel(a, b):
        return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)

    worst = 0.0
    for got, want in zip(
        list(grads.A) + list(grads.B) + list(grads.C) + list(grad_u.levels),
        list(fd_grads.A) + list(fd_grads.B) + list(fd_grads.C) + list(fd_u.levels),
    ):
        if got.size:
            worst = max(worst, float(np.max(rel(got, want))))
    ok = worst < args.tol
    print(f"max relative error vs central differences (eps {args.eps:g}): {worst:.3e}")
    print(f"{'PASS' if ok else 'FAIL'} at tolerance {args.tol:g}")
    return EXIT_OK if ok else EXIT_VERIFY


def _build_parser() -> _Parser:
    parser = _Parser(prog="treesolve",
                     description="Block tree-structured linear system toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate a random well-posed problem file")
    gen.add_argument("--arity", type=int, required=True)
    gen.add_argument("--leaves", type=int, required=True)
    gen.add_argument("--block-size", type=int, default=1)
    gen.add_argument("--heads", type=int, default=1)
    gen.add_argument("--batch", type=int, default=1)
    gen.add_argument("--rhs", type=int, default=1)
    gen.add_argument("--gamma", type=float, default=0.5,
                     help="coupling scale of the stable initialization")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    verify = sub.add_parser("verify", help="compare the tree solve against the dense oracle")
    verify.add_argument("--in", dest="infile", required=True)
    verify.add_argument("--max-dense", type=int, default=4096)
    verify.add_argument("--tol", type=float, default=1e-10)
    verify.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="time solves and dump operation counters")
    bench.add_argument("--arity", type=int, required=True)
    bench.add_argument("--block-size", type=int, default=1)
    bench.add_argument("--sizes", required=True, help="comma-separated leaf counts")
    bench.add_argument("--repeats", type=int, default=3,
                       help="timings per size; the best is reported")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True, help="CSV output path")
    bench.set_defaults(func=cmd_bench)

    flatten = sub.add_parser("flatten", help="write a pixel -> 1-based position map")
    flatten.add_argument("--height", type=int, required=True)
    flatten.add_argument("--width", type=int, required=True)
    flatten.add_argument("--order", choices=("morton", "snake"), required=True)
    flatten.add_argument("--out", required=True)
    flatten.set_defaults(func=cmd_flatten)

    gradcheck = sub.add_parser("gradcheck",
                               help="compare adjoint gradients with finite differences")
    gradcheck.add_argument("--in", dest="infile", required=True)
    gradcheck.add_argument("--eps", type=float, default=1e-5)
    gradcheck.add_argument("--tol", type=float, default=1e-5)
    gradcheck.add_argument("--max-entries", type=int, default=10_000)
    gradcheck.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except np.linalg.LinAlgError as e:
        # SingularBlockError carries the offending level/node in its message
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
