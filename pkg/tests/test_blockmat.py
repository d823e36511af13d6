import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_otfs.blockmat import (
    BlockEigenMatrix,
    GramMatrix,
    SingularBlockError,
    bd_add,
    bd_adjoint,
    bd_invert,
    bd_matvec,
    bd_mul,
    dense_contract,
    dense_expand,
    dense_invert,
    gram,
    schur_step,
)
from mimo_otfs.complexity import OpCounter, block_inverse_ops, gram_ops, inversion_ops

from conftest import random_block


def scalar_blocks(rows):
    return BlockEigenMatrix(np.array(rows, dtype=complex)[:, :, None])


class TestBasics:
    def test_identity_left_multiply(self, rng):
        y = random_block(rng, 3, 2, 4)
        np.testing.assert_array_equal(bd_mul(BlockEigenMatrix.identity(3, 4), y).blocks, y.blocks)

    def test_elementwise_product(self):
        x = BlockEigenMatrix(np.array([[[1, 2]]]))
        y = BlockEigenMatrix(np.array([[[3, 4]]]))
        np.testing.assert_array_equal(bd_mul(x, y).blocks, [[[3, 8]]])

    def test_mul_matches_dense(self, rng):
        x, y = random_block(rng, 2, 3, 4), random_block(rng, 3, 2, 4)
        np.testing.assert_allclose(dense_expand(bd_mul(x, y)), dense_expand(x) @ dense_expand(y), atol=1e-13)

    def test_mul_counts(self, rng):
        c = OpCounter()
        bd_mul(random_block(rng, 2, 3, 4), random_block(rng, 3, 5, 4), c)
        assert (c.mul_div, c.add_sub) == (2 * 5 * 3 * 4, 2 * 5 * 2 * 4)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            bd_mul(random_block(rng, 2, 3, 4), random_block(rng, 2, 3, 4))
        with pytest.raises(ValueError):
            bd_mul(random_block(rng, 2, 3, 4), random_block(rng, 3, 3, 8))
        with pytest.raises(ValueError):
            bd_add(random_block(rng, 2, 3, 4), random_block(rng, 3, 2, 4))

    def test_adjoint(self, rng):
        x = random_block(rng, 2, 3, 4)
        np.testing.assert_array_equal(bd_adjoint(bd_adjoint(x)).blocks, x.blocks)
        np.testing.assert_allclose(dense_expand(bd_adjoint(x)), dense_expand(x).conj().T)

    def test_add(self, rng):
        x = random_block(rng, 2, 2, 4)
        assert np.all(bd_add(x, x, 1, -1).blocks == 0)
        y = random_block(rng, 2, 2, 4)
        np.testing.assert_allclose(dense_expand(bd_add(x, y, 2, 0.5j)),
                                   2 * dense_expand(x) + 0.5j * dense_expand(y))

    @given(seed=st.integers(0, 2**32 - 1))
    def test_square_blocks_commute_elementwise(self, seed):
        rng = np.random.default_rng(seed)
        x, y = random_block(rng, 1, 1, 6), random_block(rng, 1, 1, 6)
        np.testing.assert_allclose(bd_mul(x, y).blocks, bd_mul(y, x).blocks)

    def test_matvec(self, rng):
        x = random_block(rng, 3, 2, 4)
        v = rng.standard_normal(8) + 0j
        np.testing.assert_allclose(bd_matvec(x, v), dense_expand(x) @ v, atol=1e-13)


class TestDenseOracle:
    def test_expand_identity(self):
        np.testing.assert_array_equal(dense_expand(BlockEigenMatrix.identity(3, 4)), np.eye(12))

    def test_round_trip(self, rng):
        x = random_block(rng, 2, 3, 5)
        np.testing.assert_array_equal(dense_contract(dense_expand(x), 2, 3).blocks, x.blocks)

    def test_contract_rejects_off_diagonal(self):
        with pytest.raises(ValueError):
            dense_contract(np.ones((4, 4)), 2, 2)

    def test_dense_invert_singular(self):
        with pytest.raises(np.linalg.LinAlgError):
            dense_invert(np.ones((3, 3)))

    def test_dense_invert_matches_solve(self, rng):
        a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        np.testing.assert_allclose(dense_invert(a) @ a, np.eye(6), atol=1e-12)


class TestGram:
    def test_identity_plus_rho(self):
        g = gram(BlockEigenMatrix.identity(1, 4), 0.5)
        np.testing.assert_allclose(g.inner.blocks, 1.5)

    def test_matches_dense(self, rng):
        d = random_block(rng, 4, 2, 4)
        dd = dense_expand(d)
        np.testing.assert_allclose(dense_expand(gram(d).inner), dd.conj().T @ dd, atol=1e-12)

    def test_hermitian(self, rng):
        g = gram(random_block(rng, 4, 3, 4), 0.1).inner.blocks
        np.testing.assert_allclose(g, np.conj(np.swapaxes(g, 0, 1)))

    def test_negative_rho(self, rng):
        with pytest.raises(ValueError):
            gram(random_block(rng, 2, 2, 2), -1.0)

    @pytest.mark.parametrize("rho", [0.0, 0.3])
    def test_counts(self, rng, rho):
        c = OpCounter()
        gram(random_block(rng, 4, 2, 1024), rho, c)
        # N_t^2 N_r mults, N_t^2 (N_r - 1) adds, plus 2 N_t for rho*I
        assert c.arithmetic == gram_ops(2, 4, 1024, rho > 0)
        assert c.arithmetic == (4 * 4 + 4 * 3 + (4 if rho else 0)) * 1024


class TestInversion:
    def test_identity(self):
        np.testing.assert_array_equal(bd_invert(BlockEigenMatrix.identity(3, 4)).blocks,
                                      BlockEigenMatrix.identity(3, 4).blocks)

    def test_two_by_two_closed_form(self):
        inv = bd_invert(scalar_blocks([[2, 1], [1, 2]]))
        np.testing.assert_allclose(inv.blocks[:, :, 0], [[2 / 3, -1 / 3], [-1 / 3, 2 / 3]])

    def test_schur_scalar(self):
        part, s = schur_step(scalar_blocks([[2, 1], [1, 2]]))
        assert s.blocks[0, 0, 0] == pytest.approx(1.5)
        assert part.corner[0] == 2

    def test_schur_block_diagonal(self, rng):
        p = np.zeros((3, 3, 4), dtype=complex)
        p[[0, 1, 2], [0, 1, 2]] = rng.standard_normal((3, 4)) + 3
        _, s = schur_step(BlockEigenMatrix(p))
        np.testing.assert_array_equal(s.blocks, p[:2, :2])

    def test_schur_matches_dense(self, rng):
        p = gram(random_block(rng, 4, 3, 4), 0.1).inner
        _, s = schur_step(p)
        full = dense_expand(p)
        a, b, c, d = full[:8, :8], full[:8, 8:], full[8:, :8], full[8:, 8:]
        np.testing.assert_allclose(dense_expand(s), a - b @ np.linalg.inv(d) @ c, atol=1e-12)

    def test_partition_stack(self, rng):
        g = gram(random_block(rng, 4, 4, 8), 0.1)
        _, stack = bd_invert(g, return_stack=True)
        assert len(stack) == 3
        assert [lvl.size for lvl in stack.levels] == [4, 3, 2]
        for lvl in stack.levels:
            assert lvl.b.shape == (lvl.size - 1, 1, 8) and lvl.c.shape == (1, lvl.size - 1, 8)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n_t=st.sampled_from([2, 3, 4]),
           mn=st.sampled_from([4, 8, 16]), rho=st.sampled_from([0.0, 0.1, 1.0]))
    def test_matches_dense_oracle(self, seed, n_t, mn, rho):
        rng = np.random.default_rng(seed)
        g = gram(random_block(rng, n_t + 1, n_t, mn), rho)
        inv = bd_invert(g)
        ref = dense_invert(dense_expand(g.inner))
        assert np.linalg.norm(dense_expand(inv) - ref) <= 1e-8 * np.linalg.norm(ref)
        # closure: the product with G is identity blocks
        prod = bd_mul(g.inner, inv).blocks
        np.testing.assert_allclose(prod, BlockEigenMatrix.identity(n_t, mn).blocks, atol=1e-9)

    def test_regularised_never_singular(self):
        rng = np.random.default_rng(7)
        for _ in range(10_000 // 50):
            # 50 Gram instances per call, batched along the bin axis
            d = random_block(rng, 2, 3, 50)
            d.blocks[:, :, ::2] *= 1e-9  # nearly rank-deficient bins
            bd_invert(gram(d, 0.01))

    def test_singular_reports_level_and_bin(self):
        d = np.ones((2, 2, 4), dtype=complex)
        d[:, :, 2] = [[1, 2], [1, 2]]  # bin 2: rank one
        with pytest.raises(SingularBlockError) as exc:
            bd_invert(gram(BlockEigenMatrix(d)))
        assert exc.value.level == 1 or exc.value.level == 2
        assert exc.value.bin_index in (0, 1, 2, 3)
        assert "bin" in str(exc.value)

    def test_singular_corner_bin(self):
        g = np.ones((2, 2, 3), dtype=complex)
        g[1, 1, 1] = 0.0
        with pytest.raises(SingularBlockError) as exc:
            bd_invert(BlockEigenMatrix(g))
        assert (exc.value.level, exc.value.bin_index) == (1, 1)

    @pytest.mark.parametrize("n_t,n_r", [(2, 4), (3, 3), (4, 8), (8, 8)])
    def test_counts(self, rng, n_t, n_r):
        mn = 16
        for rho in (0.0, 0.5):
            c = OpCounter()
            bd_invert(gram(random_block(rng, n_r, n_t, mn), rho, c), c)
            assert c.arithmetic == inversion_ops(n_t, n_r, mn, rho > 0)
            c2 = OpCounter()
            bd_invert(gram(random_block(rng, n_r, n_t, mn), rho), c2)
            assert c2.arithmetic == block_inverse_ops(n_t, mn)

    def test_gram_input_type(self, rng):
        g = gram(random_block(rng, 3, 2, 4), 0.2)
        assert isinstance(g, GramMatrix)
        np.testing.assert_allclose(bd_invert(g).blocks, bd_invert(g.inner).blocks)
