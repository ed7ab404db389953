"""Frequency-domain convolution and pooling layers, pinned against the
naive spatial oracles and exact adjoint identities."""

import numpy as np
import pytest
import scipy.fft as sfft

from fdcnn.fdlayers import (
    FdcLayer,
    FdpLayer,
    cic,
    fdc_backward,
    fdc_forward,
    fdp_backward,
    fdp_forward,
    full_fdc_backward,
    full_fdc_forward,
    kaiming_init,
    remove_artifacts,
    weight_count_cic,
)
from fdcnn.spatial import ConvConfig, KernelBank, OpCounter, conv_over_volume, weight_count_cov
from fdcnn.spectral import reduced_width, rfft2, rfft_shift, irfft2
from fdcnn.tensors import ComplexTensor, RealTensor

import oracles


def make_layer(C, S, n, rng, scale=1.0):
    cfg = ConvConfig(C, S, n, n)
    weights = rng.standard_normal((S, n, n)) * scale
    return FdcLayer(KernelBank(cfg, "cic", weights))


def spectra_of(raw):
    return rfft2(RealTensor(raw))


def ip_stored(a, b):
    """Real inner product on stored entries (arrays or tensors)."""
    da = a.data if hasattr(a, "data") else a
    db = b.data if hasattr(b, "data") else b
    return float(np.vdot(da, db).real)


class TestWeightCounts:
    @pytest.mark.parametrize("C,S,n", [(1, 2, 3), (4, 8, 3), (8, 64, 5)])
    def test_cic_vs_cov(self, C, S, n):
        cfg = ConvConfig(C, S, n, n)
        assert weight_count_cic(cfg) == S * n * n
        assert weight_count_cov(cfg) == S * C * n * n
        assert weight_count_cov(cfg) == C * weight_count_cic(cfg)
        assert weight_count_cov(cfg) - weight_count_cic(cfg) == S * (C - 1) * n * n


class TestKaimingInit:
    def test_deterministic_per_seed(self):
        bank = KernelBank.allocate(ConvConfig(2, 4, 3, 3), "cic")
        a = kaiming_init(bank, seed=7).weights
        b = kaiming_init(bank, seed=7).weights
        c = kaiming_init(bank, seed=8).weights
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_fan_in_scaling(self):
        # cic fan-in is n*n; cov fan-in is n*n*C, so cov draws are narrower.
        cfg = ConvConfig(16, 64, 5, 5)
        cic_w = kaiming_init(KernelBank.allocate(cfg, "cic"), seed=0).weights
        cov_w = kaiming_init(KernelBank.allocate(cfg, "cov"), seed=0).weights
        assert abs(cic_w.std() - np.sqrt(2 / 25)) < 0.01
        assert abs(cov_w.std() - np.sqrt(2 / (25 * 16))) < 0.003


class TestFdcLayerState:
    def test_requires_cic_layout(self):
        bank = KernelBank.allocate(ConvConfig(2, 4, 3, 3), "cov")
        with pytest.raises(ValueError):
            FdcLayer(bank)

    def test_requires_square_kernels(self):
        bank = KernelBank.allocate(ConvConfig(1, 2, 3, 5), "cic")
        with pytest.raises(ValueError):
            FdcLayer(bank)

    def test_kernel_spectra_values(self, rng):
        layer = make_layer(1, 3, 3, rng)
        spec = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        assert spec.shape == (3, 8, 5)
        for s in range(3):
            padded = np.zeros((8, 8))
            padded[:3, :3] = layer.weights[s]
            np.testing.assert_allclose(spec[s], oracles.rdft2_reduced(padded), atol=1e-10)

    def test_kernel_spectra_flip_layout(self, rng):
        layer = make_layer(1, 2, 3, rng)
        spec = layer.kernel_spectra(6, 6, np.complex128, flip=True, shifted=False)
        padded = np.zeros((6, 6))
        padded[:3, :3] = layer.weights[0, ::-1, ::-1]
        np.testing.assert_allclose(spec[0], oracles.rdft2_reduced(padded), atol=1e-10)

    def test_kernel_spectra_shifted_rows(self, rng):
        layer = make_layer(1, 2, 3, rng)
        plain = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        shifted = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=True)
        np.testing.assert_array_equal(shifted, np.roll(plain, 4, axis=-2))

    def test_cache_hit_and_invalidation(self, rng):
        layer = make_layer(1, 2, 3, rng)
        first = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        again = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        assert again is first  # cache hit returns the identical array
        layer.bank = layer.bank.with_weights(layer.weights + 1.0)
        stale = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        assert stale is first  # stale until the owner invalidates
        layer.invalidate_cache()
        fresh = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        assert fresh is not first
        assert not np.allclose(fresh, first)

    def test_cache_keys_distinguish_geometry_and_layout(self, rng):
        layer = make_layer(1, 2, 3, rng)
        a = layer.kernel_spectra(8, 8, np.complex128, flip=False, shifted=False)
        b = layer.kernel_spectra(8, 10, np.complex128, flip=False, shifted=False)
        c = layer.kernel_spectra(8, 8, np.complex128, flip=True, shifted=False)
        assert a.shape == (2, 8, 5) and b.shape == (2, 8, 6)
        assert not np.allclose(a, c)


class TestCic:
    def test_channel_partition(self, rng):
        # S = C*J kernels split contiguously: output c*J + j pairs image
        # channel c with kernel c*J + j.
        C, J, H, W = 3, 2, 4, 6
        S = C * J
        imgs = spectra_of(rng.standard_normal((1, C, H, W)))
        kern = ComplexTensor._trusted(
            (rng.standard_normal((1, S, H, reduced_width(W)))
             + 1j * rng.standard_normal((1, S, H, reduced_width(W)))),
            W,
        )
        out = cic(imgs, kern)
        assert out.data.shape == (1, S, H, reduced_width(W))
        for c in range(C):
            for j in range(J):
                s = c * J + j
                np.testing.assert_allclose(
                    out.data[0, s], imgs.data[0, c] * kern.data[0, s], atol=1e-12
                )

    def test_rejects_indivisible_channels(self, rng):
        imgs = spectra_of(rng.standard_normal((1, 3, 4, 4)))
        kern = ComplexTensor._trusted(np.ones((1, 4, 4, 3), complex), 4)
        with pytest.raises(ValueError):
            cic(imgs, kern)

    def test_rejects_extent_mismatch(self, rng):
        imgs = spectra_of(rng.standard_normal((1, 2, 4, 4)))
        kern = ComplexTensor._trusted(np.ones((1, 2, 6, 4), complex), 6)
        with pytest.raises(ValueError):
            cic(imgs, kern)

    def test_rejects_batched_kernels(self, rng):
        imgs = spectra_of(rng.standard_normal((1, 2, 4, 4)))
        kern = ComplexTensor._trusted(np.ones((2, 2, 4, 3), complex), 4)
        with pytest.raises(ValueError):
            cic(imgs, kern)

    def test_counter_adds_batch_times_s(self, rng):
        B, C, S = 3, 2, 6
        imgs = spectra_of(rng.standard_normal((B, C, 4, 4)))
        kern = ComplexTensor._trusted(
            np.ones((1, S, 4, 3)) + 0j, 4
        )
        ctr = OpCounter()
        cic(imgs, kern, counter=ctr)
        assert ctr.channel_products == B * S


class TestFdcForward:
    def test_delta_kernel_is_identity(self, rng):
        for n in (1, 3, 5):
            weights = np.zeros((2, n, n))
            weights[:, 0, 0] = 1.0
            layer = FdcLayer(KernelBank(ConvConfig(2, 2, n, n), "cic", weights))
            raw = rng.standard_normal((1, 2, 8, 8))
            out = irfft2(fdc_forward(layer, spectra_of(raw)))
            np.testing.assert_allclose(out.data, raw, atol=1e-12)

    @pytest.mark.parametrize("N,n", [(6, 3), (8, 5), (9, 3)])
    def test_matches_circular_convolution_oracle(self, rng, N, n):
        layer = make_layer(1, 2, n, rng)
        raw = rng.standard_normal((1, 1, N, N))
        out = irfft2(fdc_forward(layer, spectra_of(raw)))
        for s in range(2):
            padded = np.zeros((N, N))
            padded[:n, :n] = layer.weights[s]
            np.testing.assert_allclose(
                out.data[0, s], oracles.circular_convolve(raw[0, 0], padded), atol=1e-10
            )

    def test_shifted_commutes_with_row_shift(self, rng):
        layer = make_layer(2, 4, 3, rng)
        x = spectra_of(rng.standard_normal((2, 2, 8, 8)))
        plain = fdc_forward(layer, x)
        from_shifted = fdc_forward(layer, rfft_shift(x), shifted=True)
        np.testing.assert_allclose(
            rfft_shift(from_shifted).data, plain.data, atol=1e-12
        )

    def test_shifted_requires_even_height(self, rng):
        layer = make_layer(1, 1, 3, rng)
        x = spectra_of(rng.standard_normal((1, 1, 7, 8)))
        with pytest.raises(ValueError):
            fdc_forward(layer, x, shifted=True)

    def test_rejects_spatial_input(self, rng):
        layer = make_layer(1, 1, 3, rng)
        with pytest.raises(TypeError):
            fdc_forward(layer, RealTensor(rng.standard_normal((1, 1, 8, 8))))

    def test_counter(self, rng):
        layer = make_layer(2, 6, 3, rng)
        ctr = OpCounter()
        fdc_forward(layer, spectra_of(rng.standard_normal((4, 2, 8, 8))), counter=ctr)
        assert ctr.channel_products == 4 * 6


class TestRemoveArtifacts:
    def test_extents_and_content(self, rng):
        raw = rng.standard_normal((2, 3, 10, 10))
        out = remove_artifacts(RealTensor(raw), 3)
        assert out.data.shape == (2, 3, 8, 8)
        np.testing.assert_array_equal(out.data, raw[:, :, 2:, 2:])

    def test_kernel_one_is_noop(self, rng):
        t = RealTensor(rng.standard_normal((1, 1, 5, 5)))
        assert remove_artifacts(t, 1) is t

    def test_plain_array_keeps_leading_shape(self, rng):
        raw = rng.standard_normal((2, 3, 6, 6))
        out = remove_artifacts(raw, 3)
        assert isinstance(out, np.ndarray)
        assert out.shape == (2, 3, 4, 4)
        np.testing.assert_array_equal(out, raw[:, :, 2:, 2:])

    def test_rejects_too_small(self, rng):
        with pytest.raises(ValueError):
            remove_artifacts(RealTensor(np.ones((1, 1, 4, 4))), 5)
        with pytest.raises(ValueError):
            remove_artifacts(np.ones((4, 4)), 0)


class TestFullFdc:
    @pytest.mark.parametrize("C,J,n,N", [(1, 2, 3, 8), (2, 2, 3, 10), (2, 1, 5, 12)])
    def test_equals_valid_correlation_per_channel(self, rng, C, J, n, N):
        layer = make_layer(C, C * J, n, rng)
        raw = rng.standard_normal((2, C, N, N))
        out = full_fdc_forward(layer, RealTensor(raw))
        assert out.data.shape == (2, C * J, N - n + 1, N - n + 1)
        for b in range(2):
            for c in range(C):
                for j in range(J):
                    s = c * J + j
                    np.testing.assert_allclose(
                        out.data[b, s],
                        oracles.correlate_valid(raw[b, c], layer.weights[s]),
                        atol=1e-9,
                    )

    def test_artifacts_land_top_left(self, rng):
        # Without cropping, the wrap-around band occupies the first n-1
        # rows/columns; everything else matches the valid correlation.
        n, N = 3, 8
        layer = make_layer(1, 1, n, rng)
        raw = rng.standard_normal((N, N))
        padded = np.zeros((N, N))
        padded[:n, :n] = layer.weights[0, ::-1, ::-1]
        circ = oracles.circular_convolve(raw, padded)
        valid = oracles.correlate_valid(raw, layer.weights[0])
        np.testing.assert_allclose(circ[n - 1 :, n - 1 :], valid, atol=1e-10)

    def test_distribute_artifacts_preserves_size(self, rng):
        n, N = 3, 8
        layer = make_layer(1, 2, n, rng)
        raw = rng.standard_normal((1, 1, N, N))
        out = full_fdc_forward(layer, RealTensor(raw), distribute_artifacts=True)
        assert out.data.shape == (1, 2, N, N)
        # Distribution is a pure roll of the circular output: the valid
        # region sits inset by (n-1)//2 instead of n-1.
        padded = np.zeros((N, N))
        padded[:n, :n] = layer.weights[0, ::-1, ::-1]
        circ = oracles.circular_convolve(raw[0, 0], padded)
        np.testing.assert_allclose(
            out.data[0, 0], np.roll(circ, (-1, -1), axis=(0, 1)), atol=1e-10
        )

    def test_plain_array_io(self, rng):
        layer = make_layer(1, 1, 3, rng)
        raw = rng.standard_normal((1, 1, 6, 6))
        out = full_fdc_forward(layer, raw)
        assert isinstance(out, np.ndarray)
        np.testing.assert_allclose(out, full_fdc_forward(layer, RealTensor(raw)).data)

    def test_counter_counts_s_not_s_times_c(self, rng):
        C, S = 4, 8
        layer = make_layer(C, S, 3, rng)
        ctr_fd = OpCounter()
        full_fdc_forward(layer, rng.standard_normal((2, C, 8, 8)), counter=ctr_fd)
        assert ctr_fd.channel_products == 2 * S
        cov = KernelBank.allocate(ConvConfig(C, S, 3, 3), "cov")
        ctr_sp = OpCounter()
        conv_over_volume(rng.standard_normal((2, C, 8, 8)), cov, ctr_sp)
        assert ctr_sp.channel_products == 2 * S * C == C * ctr_fd.channel_products


class TestFdcBackward:
    @pytest.mark.parametrize("shifted", [False, True])
    def test_adjoint_identities(self, rng, shifted):
        B, C, S, n, N = 2, 2, 4, 3, 8
        layer = make_layer(C, S, n, rng)
        x = spectra_of(rng.standard_normal((B, C, N, N)))
        if shifted:
            x = rfft_shift(x)
        y = fdc_forward(layer, x, shifted=shifted)
        g = ComplexTensor._trusted(
            rng.standard_normal(y.data.shape) + 1j * rng.standard_normal(y.data.shape),
            y.spatial_width,
        )
        input_grad, kernel_grad = fdc_backward(layer, x, g, shifted=shifted)
        assert kernel_grad.shape == (S, n, n)
        lhs = ip_stored(g, y)
        assert abs(lhs - ip_stored(input_grad, x)) <= 1e-9 * max(1.0, abs(lhs))
        assert abs(lhs - float(np.vdot(kernel_grad, layer.weights).real)) <= 1e-9 * max(
            1.0, abs(lhs)
        )

    def test_shape_mismatch_rejected(self, rng):
        layer = make_layer(1, 2, 3, rng)
        x = spectra_of(rng.standard_normal((1, 1, 8, 8)))
        bad = ComplexTensor._trusted(np.ones((1, 2, 6, 4), complex), 6)
        with pytest.raises(ValueError):
            fdc_backward(layer, x, bad)


class TestFullFdcBackward:
    @pytest.mark.parametrize("distribute", [False, True])
    def test_adjoint_identities(self, rng, distribute):
        B, C, S, n, N = 2, 2, 4, 3, 8
        layer = make_layer(C, S, n, rng)
        raw = rng.standard_normal((B, C, N, N))
        out = full_fdc_forward(layer, RealTensor(raw), distribute_artifacts=distribute)
        g = rng.standard_normal(out.data.shape)
        input_grad, kernel_grad = full_fdc_backward(
            layer, raw, g, distribute_artifacts=distribute
        )
        assert input_grad.shape == raw.shape
        assert kernel_grad.shape == (S, n, n)
        lhs = float(np.vdot(g, out.data))
        assert abs(lhs - float(np.vdot(input_grad, raw))) <= 1e-9 * max(1.0, abs(lhs))
        assert abs(lhs - float(np.vdot(kernel_grad, layer.weights))) <= 1e-9 * max(
            1.0, abs(lhs)
        )

    def test_input_gradient_matches_full_convolution_oracle(self, rng):
        B, C, J, n, N = 1, 2, 2, 3, 7
        S = C * J
        layer = make_layer(C, S, n, rng)
        raw = rng.standard_normal((B, C, N, N))
        g = rng.standard_normal((B, S, N - n + 1, N - n + 1))
        input_grad, kernel_grad = full_fdc_backward(layer, raw, g)
        for c in range(C):
            want = np.zeros((N, N))
            for j in range(J):
                want += oracles.full_convolve(g[0, c * J + j], layer.weights[c * J + j])
            np.testing.assert_allclose(input_grad[0, c], want, atol=1e-9)
        for c in range(C):
            for j in range(J):
                s = c * J + j
                np.testing.assert_allclose(
                    kernel_grad[s],
                    oracles.correlate_valid(raw[0, c], g[0, s]),
                    atol=1e-9,
                )


class TestFdpForward:
    def test_band_interior_signal_pools_exactly(self, rng):
        # Build a fine image from a coarse spectrum supported strictly
        # inside the target band; pooling must recover that spectrum, and
        # the pooled image must be the ideal stride-2 downsample.
        H = W = 16
        th = tw = 8
        coarse = rng.standard_normal((th, tw))
        Xc = sfft.rfft2(coarse)
        Xc[th // 2, :] = 0.0  # clear coarse Nyquist row/column so the
        Xc[:, tw // 2] = 0.0  # one-sided embedding is unambiguous
        coarse = sfft.irfft2(Xc, s=(th, tw))
        Xc = sfft.rfft2(coarse)
        Xc_sh = np.roll(Xc, th // 2, axis=0)
        fine_sh = np.zeros((H, reduced_width(W)), dtype=complex)
        top = (H - th) // 2
        fine_sh[top : top + th, : reduced_width(tw)] = Xc_sh
        fine = np.roll(fine_sh, -(H // 2), axis=0)
        xf = sfft.irfft2(fine, s=(H, W))

        pooled = fdp_forward(
            FdpLayer(th, tw), rfft_shift(spectra_of(xf[None, None])), shifted=True
        )
        assert pooled.spatial_width == tw
        assert pooled.data.shape == (1, 1, th, reduced_width(tw))
        np.testing.assert_allclose(pooled.data[0, 0], Xc_sh, atol=1e-8)
        np.testing.assert_allclose(xf[::2, ::2] * 4.0, coarse, atol=1e-10)
        # The inverse transform normalizes by the coarse extent, so the
        # pooled image reproduces the generator exactly (4x the fine
        # samples), not an attenuated copy.
        back = irfft2(rfft_shift(pooled))
        np.testing.assert_allclose(back.data[0, 0], coarse, atol=1e-10)

    def test_crop_is_zero_copy_view(self, rng):
        x = rfft_shift(spectra_of(rng.standard_normal((1, 2, 16, 16))))
        pooled = fdp_forward(FdpLayer(8, 8), x, shifted=True)
        assert np.shares_memory(pooled.data, x.data)

    def test_requires_shift_assertion(self, rng):
        x = spectra_of(rng.standard_normal((1, 1, 16, 16)))
        with pytest.raises(ValueError):
            fdp_forward(FdpLayer(8, 8), x, shifted=False)

    def test_rejects_target_not_smaller(self, rng):
        x = rfft_shift(spectra_of(rng.standard_normal((1, 1, 8, 8))))
        with pytest.raises(ValueError):
            fdp_forward(FdpLayer(8, 4), x, shifted=True)
        with pytest.raises(ValueError):
            fdp_forward(FdpLayer(4, 8), x, shifted=True)

    def test_rejects_odd_row_difference(self, rng):
        x = rfft_shift(spectra_of(rng.standard_normal((1, 1, 8, 8)))
                       )
        with pytest.raises(ValueError):
            fdp_forward(FdpLayer(5, 4), x, shifted=True)

    def test_rejects_bad_targets(self):
        with pytest.raises(ValueError):
            FdpLayer(0, 4)
        with pytest.raises(ValueError):
            FdpLayer(4, 0)


class TestFdpBackward:
    def test_zero_insertion_round_trip(self, rng):
        x = rfft_shift(spectra_of(rng.standard_normal((2, 3, 16, 16))))
        layer = FdpLayer(8, 8)
        pooled = fdp_forward(layer, x, shifted=True)
        restored = fdp_backward(layer, pooled, 16, 16)
        assert restored.data.shape == x.data.shape
        assert restored.spatial_width == 16
        # Retained bins are bit-identical; removed bins are exactly zero.
        np.testing.assert_array_equal(
            fdp_forward(layer, restored, shifted=True).data, pooled.data
        )
        mask = np.zeros((16, 9), dtype=bool)
        mask[4:12, :5] = True
        assert np.all(restored.data[..., ~mask] == 0)

    def test_adjoint_identity(self, rng):
        x = rfft_shift(spectra_of(rng.standard_normal((1, 2, 12, 12))))
        layer = FdpLayer(6, 6)
        y = fdp_forward(layer, x, shifted=True)
        g = ComplexTensor._trusted(
            rng.standard_normal(y.data.shape) + 1j * rng.standard_normal(y.data.shape),
            y.spatial_width,
        )
        back = fdp_backward(layer, g, 12, 12)
        assert abs(ip_stored(y, g) - ip_stored(x, back)) < 1e-10

    def test_rejects_gradient_shape_mismatch(self, rng):
        layer = FdpLayer(8, 8)
        bad = ComplexTensor._trusted(np.ones((1, 1, 6, 5), complex), 8)
        with pytest.raises(ValueError):
            fdp_backward(layer, bad, 16, 16)
