import numpy as np
import pytest

from treesolve import (LevelParams, TreeVector, apply_gauge, assemble_dense,
                       build_chain, build_perfect_tree, init_random_stable,
                       scale_rhs, solve, ssm_reference, ssm_to_chain)
from helpers import random_rhs, rel_err


class TestContainers:
    def test_level_params_shape_checks(self):
        with pytest.raises(ValueError, match="must be"):
            LevelParams((np.zeros((1, 1, 2, 3)),), (), ())
        with pytest.raises(ValueError, match="coupling levels"):
            LevelParams((np.eye(2).reshape(1, 1, 2, 2),), (np.zeros((1, 1, 2, 2)),), ())

    def test_params_are_frozen(self):
        params = init_random_stable(build_perfect_tree(2, 4), 1, seed=0)
        with pytest.raises(ValueError):
            params.A[0][0, 0, 0, 0] = 5.0

    def test_rejects_non_finite(self):
        a = np.eye(2).reshape(1, 1, 2, 2).copy()
        a[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            LevelParams((a,), (), ())

    def test_tree_vector_consistency(self):
        with pytest.raises(ValueError, match="disagree"):
            TreeVector((np.zeros((1, 1, 2, 1, 1)), np.zeros((2, 1, 1, 1, 1))))

    def test_tree_vector_arithmetic(self):
        u = TreeVector((np.ones((1, 1, 2, 1, 1)),))
        v = 2.0 * u - u
        np.testing.assert_allclose(v.levels[0], u.levels[0])


class TestStableInit:
    def test_deterministic(self):
        tree = build_perfect_tree(2, 8)
        p1 = init_random_stable(tree, 2, heads=2, seed=9, coupling_scale=0.5)
        p2 = init_random_stable(tree, 2, heads=2, seed=9, coupling_scale=0.5)
        for a, b in zip(p1.B, p2.B):
            np.testing.assert_array_equal(a, b)

    def test_zero_coupling_gives_identity_system(self):
        tree = build_perfect_tree(2, 4)
        params = init_random_stable(tree, 3, seed=1, coupling_scale=0.0)
        assert all(np.max(np.abs(b)) == 0 for b in params.B)
        u = random_rhs(tree, 3, rng=np.random.default_rng(0))
        x = solve(params, tree, u)
        assert rel_err(x, u) == 0.0

    def test_skew_coupling_and_bound(self):
        tree = build_perfect_tree(4, 16)
        gamma = 0.8
        params = init_random_stable(tree, 2, seed=5, coupling_scale=gamma)
        for b, c in zip(params.B, params.C):
            np.testing.assert_array_equal(c, -b.swapaxes(-1, -2))
            assert np.max(np.abs(b)) <= gamma / (4 * 2)

    def test_assembled_system_is_positive_definite(self):
        # binary tree, 4 leaves, d=1, gamma=0.5, seed=7: every eigenvalue of
        # the assembled matrix has positive real part and the symmetric part
        # is the identity (couplings are skew)
        tree = build_perfect_tree(2, 4)
        params = init_random_stable(tree, 1, seed=7, coupling_scale=0.5)
        m = assemble_dense(params, tree).matrix
        assert np.min(np.linalg.eigvals(m).real) > 0
        sym = (m + m.swapaxes(-1, -2)) / 2
        np.testing.assert_allclose(sym, np.broadcast_to(np.eye(m.shape[-1]), m.shape),
                                   atol=1e-15)


class TestGauge:
    def test_identity_gauge_is_noop(self):
        tree = build_perfect_tree(2, 4)
        params = init_random_stable(tree, 2, seed=3, coupling_scale=0.5)
        gauge = [np.broadcast_to(np.eye(2), a.shape).copy() for a in params.A]
        out = apply_gauge(params, tree, gauge)
        for got, want in zip(out.A + out.B + out.C, params.A + params.B + params.C):
            np.testing.assert_allclose(got, want, atol=1e-15)

    def test_uniform_scalar_chain(self):
        # chain with A=(1,1,1), all gauge blocks 2: A halves and each C halves
        tree = build_chain(3)
        ones = np.ones((1, 1, 1, 1))
        params = LevelParams((ones, ones, ones),
                             (0 * ones, 0 * ones),
                             (3 * ones, 5 * ones))
        gauge = [2 * ones] * 3
        out = apply_gauge(params, tree, gauge)
        for a in out.A:
            np.testing.assert_allclose(a, 0.5 * ones)
        np.testing.assert_allclose(out.C[0], 1.5 * ones)
        np.testing.assert_allclose(out.C[1], 2.5 * ones)

    def test_gauge_invariance_of_solution(self):
        rng = np.random.default_rng(11)
        tree = build_perfect_tree(3, 27)
        params = init_random_stable(tree, 2, heads=2, seed=4, coupling_scale=0.9)
        u = random_rhs(tree, 2, heads=2, batch=2, rng=rng)
        gauge = [np.eye(2) + 0.4 * rng.uniform(-1, 1, a.shape) for a in params.A]
        x0 = solve(params, tree, u)
        x1 = solve(apply_gauge(params, tree, gauge), tree, scale_rhs(u, gauge))
        assert rel_err(x1, x0) < 1e-12

    def test_singular_gauge_rejected(self):
        tree = build_perfect_tree(2, 4)
        params = init_random_stable(tree, 2, seed=3)
        gauge = [np.broadcast_to(np.eye(2), a.shape).copy() for a in params.A]
        gauge[1][0, 1] = 0.0
        with pytest.raises(np.linalg.LinAlgError):
            apply_gauge(params, tree, gauge)


class TestSsmConversion:
    def test_identity_inputs_zero_interaction(self):
        S = np.broadcast_to(np.eye(2), (4, 2, 2)).copy()
        I = np.zeros((3, 2, 2))
        params = ssm_to_chain(I, S)
        for a in params.A:
            np.testing.assert_allclose(a[0, 0], np.eye(2))
        for c in params.C:
            np.testing.assert_allclose(c, 0)

    def test_scalar_recurrence_values(self):
        # S=2, I=0.5, u=(1,1,1): x = (2, 3, 3.5)
        S = np.full((3, 1, 1), 2.0)
        I = np.full((2, 1, 1), 0.5)
        params = ssm_to_chain(I, S)
        tree = build_chain(3)
        u = TreeVector(tuple(np.ones((1, 1, 1, 1, 1)) for _ in range(3)))
        x = solve(params, tree, u)
        got = [float(v.reshape(-1)[0]) for v in x.levels]
        np.testing.assert_allclose(got, [2.0, 3.0, 3.5], atol=1e-14)

    def test_random_scalar_ssm_matches_reference(self):
        rng = np.random.default_rng(21)
        L = 32
        S = (1 + rng.uniform(0.5, 1.5, (L, 1, 1)))
        I = rng.uniform(-0.8, 0.8, (L - 1, 1, 1))
        u_seq = rng.standard_normal((L, 1, 1))
        want = ssm_reference(I, S, u_seq)
        x = solve(ssm_to_chain(I, S), build_chain(L),
                  TreeVector(tuple(u_seq[k].reshape(1, 1, 1, 1, 1) for k in range(L))))
        got = np.stack([v[0, 0, 0] for v in x.levels])
        assert np.max(np.abs(got - want)) < 1e-12 * max(1.0, np.max(np.abs(want)))

    def test_singular_input_map_rejected(self):
        S = np.zeros((2, 1, 1))
        with pytest.raises(ValueError, match="singular"):
            ssm_to_chain(np.ones((1, 1, 1)), S)
