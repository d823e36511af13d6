import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_otfs.blockmat import dense_expand
from mimo_otfs.channel import (
    ChannelRealization,
    ConfigurationError,
    CsiErrorModel,
    DelayDopplerProfile,
    NoiseModel,
    Tap,
    apply_channel,
    apply_transform,
    build_dense_channel,
    eigen_matrix,
    perturb_csi,
    random_profile,
    sample_channel,
    table2_profile,
    transmit,
)
from mimo_otfs.frame import SymbolFrame

from conftest import loop_channel, psi


def single_tap(l, k, M, N, gain=1.0):
    prof = DelayDopplerProfile((Tap(0.0, l, k),), M, N)
    return ChannelRealization(np.full((1, 1, 1), gain, dtype=complex), prof)


class TestProfile:
    def test_table2_powers_normalised(self):
        p = table2_profile()
        assert p.n_taps == 5
        assert np.isclose(p.powers().sum(), 1.0)
        lin = 10 ** (np.array([1.0, -1.804, -3.565, -5.376, -8.860]) / 10)
        np.testing.assert_allclose(p.powers(), lin / lin.sum())

    def test_table2_grid_mapping_32(self):
        # delay resolution 1/(32*15 kHz) = 2.083 us, Doppler resolution 15 kHz / 32 = 468.75 Hz
        p = table2_profile(32, 32)
        assert [(t.delay, t.doppler) for t in p.taps] == [(1, 0), (2, 1), (4, 2), (6, 3), (7, 4)]

    @pytest.mark.parametrize("M", [4, 8, 16])
    def test_table2_small_grids_stay_distinct(self, M):
        p = table2_profile(M, M)
        assert len({(t.delay, t.doppler) for t in p.taps}) == 5

    def test_rejects_out_of_grid_and_duplicates(self):
        with pytest.raises(ConfigurationError):
            DelayDopplerProfile((Tap(0, 4, 0),), 4, 4)
        with pytest.raises(ConfigurationError):
            DelayDopplerProfile((Tap(0, 1, 1), Tap(-3, 1, 1)), 4, 4)

    def test_nonzeros_sum_to_tap_count(self):
        p = table2_profile(16, 16)
        assert p.nonzeros_per_circulant_block().sum() == 5
        assert CsiErrorModel.for_profile(0.2, p).sigma_d_sq == pytest.approx(1.0)


class TestSampling:
    def test_shape_and_tap_variances(self):
        p = table2_profile()
        rng = np.random.default_rng(1)
        real = sample_channel(p, 2, 4, rng)
        assert real.gains.shape == (4, 2, 5)
        draws = np.stack([sample_channel(p, 1, 1, rng).gains[0, 0] for _ in range(20000)])
        # the phase rotation does not change the variance
        var = (np.abs(draws) ** 2).mean(axis=0)
        np.testing.assert_allclose(var, p.powers(), rtol=0.04)

    def test_tap_variance_within_two_percent_at_1e5(self):
        p = table2_profile()
        rng = np.random.default_rng(2)
        g = sample_channel(p, 10, 10, rng).gains  # 100 pairs per draw
        draws = [g] + [sample_channel(p, 10, 10, rng).gains for _ in range(999)]
        var = (np.abs(np.stack(draws)) ** 2).mean(axis=(0, 1, 2))
        np.testing.assert_allclose(var, p.powers(), rtol=0.02)

    def test_phase_rotation(self):
        p = DelayDopplerProfile((Tap(0, 3, 5),), 8, 8)
        a = sample_channel(p, 1, 1, np.random.default_rng(4)).gains
        from mimo_otfs.rng import complex_normal

        raw = complex_normal(np.random.default_rng(4), (1, 1, 1))
        np.testing.assert_allclose(a, raw * np.exp(-2j * np.pi * 15 / 64))

    def test_deterministic(self):
        p = table2_profile(8, 8)
        a = sample_channel(p, 2, 4, np.random.default_rng(9)).gains
        b = sample_channel(p, 2, 4, np.random.default_rng(9)).gains
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("nt,nr", [(0, 2), (3, 2)])
    def test_invalid_dims(self, nt, nr):
        with pytest.raises(ConfigurationError):
            sample_channel(table2_profile(8, 8), nt, nr, np.random.default_rng(0))


class TestDenseChannel:
    def test_zero_tap_is_scaled_identity(self):
        h = build_dense_channel(single_tap(0, 0, 2, 2, 3 - 1j))
        np.testing.assert_array_equal(h, (3 - 1j) * np.eye(4))

    def test_pure_delay_swaps_blocks(self):
        h = build_dense_channel(single_tap(1, 0, 2, 2, 2.0))
        expect = 2.0 * np.kron(np.array([[0, 1], [1, 0]]), np.eye(2))
        np.testing.assert_array_equal(h, expect)

    def test_matches_loop_oracle(self, rng):
        p = table2_profile(8, 8)
        real = sample_channel(p, 2, 2, rng)
        taps = [(t.delay, t.doppler) for t in p.taps]
        np.testing.assert_array_equal(build_dense_channel(real), loop_channel(real.gains, taps, 8, 8))

    def test_doubly_block_circulant(self, rng):
        M = N = 8
        real = sample_channel(table2_profile(M, N), 2, 2, rng)
        h = build_dense_channel(real).reshape(2, M, N, 2, M, N)  # [r, l, k, t, l', k']
        # shifting row and column by the same (dl, dk) leaves every entry unchanged
        for dl in range(M):
            for dk in range(N):
                shifted = np.roll(h, (dl, dk, dl, dk), axis=(1, 2, 4, 5))
                np.testing.assert_array_equal(shifted, h)


class TestEigen:
    def test_identity_channel(self):
        d = eigen_matrix(single_tap(0, 0, 4, 4, 2 + 1j))
        np.testing.assert_allclose(d.blocks, 2 + 1j)

    def test_pure_delay_eigenvalues(self):
        d = eigen_matrix(single_tap(1, 0, 2, 2, 1.5))
        np.testing.assert_allclose(d.blocks[0, 0], [1.5, 1.5, -1.5, -1.5])
        h = build_dense_channel(single_tap(1, 0, 2, 2, 1.5))
        np.testing.assert_allclose(np.sort(np.linalg.eigvals(h).real), [-1.5, -1.5, 1.5, 1.5])

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), M=st.sampled_from([2, 4, 8, 16]),
           N=st.sampled_from([2, 4, 8, 16]), nt=st.integers(1, 2), extra=st.integers(0, 1))
    def test_reconstruction(self, seed, M, N, nt, extra):
        rng = np.random.default_rng(seed)
        real = sample_channel(random_profile(rng, M, N, min(5, M * N)), nt, nt + extra, rng)
        h = build_dense_channel(real)
        rec = psi(real.n_r, M, N).conj().T @ dense_expand(eigen_matrix(real)) @ psi(nt, M, N)
        assert np.linalg.norm(rec - h) <= 1e-10 * np.linalg.norm(h)


class TestTransform:
    @given(seed=st.integers(0, 2**32 - 1), ant=st.integers(1, 3))
    def test_unitary(self, seed, ant):
        v = np.random.default_rng(seed).standard_normal(ant * 32) + 0j
        back = apply_transform(apply_transform(v, ant, 4, 8), ant, 4, 8, "adjoint")
        np.testing.assert_allclose(back, v, atol=1e-12)

    def test_constant_to_impulse(self):
        np.testing.assert_allclose(apply_transform(np.ones(4), 1, 2, 2), [2, 0, 0, 0], atol=1e-15)

    def test_matches_kron_dft(self, rng):
        v = rng.standard_normal(2 * 32) + 1j * rng.standard_normal(2 * 32)
        np.testing.assert_allclose(apply_transform(v, 2, 4, 8), psi(2, 4, 8) @ v, atol=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            apply_transform(np.ones(5), 1, 2, 2)

    def test_fast_channel_matches_dense(self, rng):
        real = sample_channel(random_profile(rng, 8, 8), 2, 3, rng)
        x = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        h = build_dense_channel(real)
        np.testing.assert_allclose(apply_channel(eigen_matrix(real), x, 8, 8), h @ x, atol=1e-12)


class TestTransmit:
    def test_identity_noiseless(self, rng):
        real = single_tap(0, 0, 4, 4)
        x = SymbolFrame(rng.standard_normal(16) + 0j, 1, 4, 4)
        y = transmit(x, real, NoiseModel(1.0, 0.0), rng)
        np.testing.assert_allclose(y.data, x.data, atol=1e-14)

    def test_fast_path_matches_dense(self, rng):
        real = sample_channel(table2_profile(8, 8), 2, 4, rng)
        x = SymbolFrame(rng.standard_normal(128) + 1j * rng.standard_normal(128), 2, 8, 8)
        y = transmit(x, real, NoiseModel(1.0, 0.0), rng)
        ref = build_dense_channel(real) @ x.data
        assert np.linalg.norm(y.data - ref) <= 1e-10 * np.linalg.norm(ref)

    def test_pure_noise_variance(self):
        real = single_tap(0, 0, 16, 16)
        rng = np.random.default_rng(5)
        ys = np.concatenate([
            transmit(SymbolFrame(np.zeros(256), 1, 16, 16), real, NoiseModel(1.0, 1.0), rng).data
            for _ in range(400)
        ])
        p = np.abs(ys) ** 2
        se = p.std() / np.sqrt(p.size)
        assert abs(p.mean() - 1.0) <= 3 * se

    def test_dimension_mismatch(self, rng):
        real = sample_channel(table2_profile(8, 8), 2, 2, rng)
        with pytest.raises(ValueError):
            transmit(SymbolFrame(np.zeros(64), 1, 8, 8), real, NoiseModel(), rng)


class TestCsiError:
    def test_zero_variance(self, rng):
        real = sample_channel(table2_profile(8, 8), 2, 2, rng)
        est, dd = perturb_csi(real, CsiErrorModel(0.0), rng)
        assert np.all(dd.blocks == 0)
        np.testing.assert_array_equal(est.gains, real.gains)

    def test_support_shared(self, rng):
        p = table2_profile(8, 8)
        real = sample_channel(p, 1, 1, rng)
        est, _ = perturb_csi(real, CsiErrorModel(0.3), rng)
        h_err = build_dense_channel(est) - build_dense_channel(real)
        h = build_dense_channel(real)
        assert np.all((h_err != 0) <= (h != 0))

    def test_delta_d_moments(self):
        p = table2_profile(8, 8)
        err = CsiErrorModel.for_profile(0.1, p)
        real = sample_channel(p, 2, 2, np.random.default_rng(0))
        rng = np.random.default_rng(6)
        draws = np.stack([perturb_csi(real, err, rng)[1].blocks for _ in range(4000)])
        per_draw = (np.abs(draws) ** 2).mean(axis=(1, 2, 3))
        se = per_draw.std(ddof=1) / np.sqrt(per_draw.size)
        assert abs(per_draw.mean() - err.sigma_d_sq) <= 3 * se
        # entries of one draw are correlated, so pool within a draw and band across draws
        draw_mean = draws.mean(axis=(1, 2, 3))
        se_mean = np.sqrt((np.abs(draw_mean - draw_mean.mean()) ** 2).sum() / (draw_mean.size - 1) / draw_mean.size)
        assert abs(draw_mean.mean()) <= 3 * se_mean
        # single entry: sigma_d / sqrt(n) band
        assert abs(draws[:, 0, 1, 7].mean()) <= 3 * np.sqrt(err.sigma_d_sq / draws.shape[0])
