"""Spatial reference engine: valid correlation, volume convolution, and
weight/op accounting, pinned against the quadruple-loop oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdcnn.spatial import (
    ConvConfig,
    KernelBank,
    OpCounter,
    conv2d_valid,
    conv_over_volume,
    weight_count_cov,
)
from fdcnn.tensors import RealTensor

import oracles


class TestConvConfig:
    def test_fields(self):
        cfg = ConvConfig(3, 8, 5, 5)
        assert (cfg.in_channels, cfg.out_channels) == (3, 8)
        assert (cfg.kernel_height, cfg.kernel_width) == (5, 5)

    @pytest.mark.parametrize("bad", [(0, 1, 3, 3), (1, 0, 3, 3), (1, 1, 0, 3)])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            ConvConfig(*bad)

    @pytest.mark.parametrize("kh,kw", [(2, 3), (3, 2), (4, 4)])
    def test_rejects_even_kernels(self, kh, kw):
        with pytest.raises(ValueError):
            ConvConfig(1, 1, kh, kw)


class TestOpCounter:
    def test_starts_at_zero_and_accumulates(self):
        ctr = OpCounter()
        assert ctr.channel_products == 0
        ctr.add(6)
        ctr.add(4)
        assert ctr.channel_products == 10

    def test_instances_are_independent(self):
        a, b = OpCounter(), OpCounter()
        a.add(3)
        assert b.channel_products == 0


class TestKernelBank:
    def test_cov_shape(self):
        cfg = ConvConfig(3, 4, 3, 3)
        bank = KernelBank.allocate(cfg, "cov")
        assert bank.weights.shape == (4, 3, 3, 3)
        assert bank.weight_count == 4 * 3 * 3 * 3 == weight_count_cov(cfg)

    def test_cic_shape(self):
        cfg = ConvConfig(3, 6, 3, 3)
        bank = KernelBank.allocate(cfg, "cic")
        assert bank.weights.shape == (6, 3, 3)
        assert bank.weight_count == 6 * 9

    def test_rejects_unknown_layout(self):
        cfg = ConvConfig(1, 1, 3, 3)
        with pytest.raises(ValueError):
            KernelBank(cfg, "dense", np.zeros((1, 1, 3, 3)))

    def test_rejects_wrong_shape(self):
        cfg = ConvConfig(2, 4, 3, 3)
        with pytest.raises(ValueError):
            KernelBank(cfg, "cov", np.zeros((4, 3, 3)))  # cic-shaped
        with pytest.raises(ValueError):
            KernelBank(cfg, "cic", np.zeros((4, 2, 3, 3)))  # cov-shaped

    def test_with_weights_replaces_values(self, rng):
        cfg = ConvConfig(2, 2, 3, 3)
        w = rng.standard_normal((2, 2, 3, 3))
        bank = KernelBank.allocate(cfg, "cov").with_weights(w)
        assert np.array_equal(bank.weights, w)
        assert bank.config is cfg

    def test_allocate_dtype(self):
        cfg = ConvConfig(1, 1, 3, 3)
        bank = KernelBank.allocate(cfg, "cov", dtype=np.float32)
        assert bank.weights.dtype == np.float32


class TestConv2dValid:
    @pytest.mark.parametrize("n,k", [(5, 1), (5, 3), (8, 3), (9, 5), (7, 7)])
    def test_matches_oracle(self, rng, n, k):
        img = rng.standard_normal((n, n))
        ker = rng.standard_normal((k, k))
        np.testing.assert_allclose(
            conv2d_valid(img, ker), oracles.correlate_valid(img, ker), rtol=0, atol=1e-12
        )

    def test_output_extent(self, rng):
        out = conv2d_valid(rng.standard_normal((10, 12)), rng.standard_normal((3, 5)))
        assert out.shape == (8, 8)

    def test_is_correlation_not_flipped(self):
        # A kernel with a single off-origin tap selects the forward-shifted
        # sample; a flipped convolution would select the backward one.
        img = np.arange(16.0).reshape(4, 4)
        ker = np.zeros((3, 3))
        ker[2, 2] = 1.0
        np.testing.assert_array_equal(conv2d_valid(img, ker), img[2:, 2:])

    def test_accepts_single_slice_tensor(self, rng):
        raw = rng.standard_normal((6, 6))
        t = RealTensor(raw)  # promoted to (1, 1, 6, 6)
        ker = rng.standard_normal((3, 3))
        np.testing.assert_allclose(conv2d_valid(t, ker), conv2d_valid(raw, ker))

    def test_rejects_multichannel_tensor(self, rng):
        t = RealTensor(rng.standard_normal((2, 6, 6)))
        with pytest.raises(ValueError):
            conv2d_valid(t, np.ones((3, 3)))

    def test_rejects_oversized_kernel(self, rng):
        with pytest.raises(ValueError):
            conv2d_valid(rng.standard_normal((4, 4)), rng.standard_normal((5, 5)))

    def test_rejects_non_2d(self, rng):
        with pytest.raises(ValueError):
            conv2d_valid(rng.standard_normal((2, 4, 4)), np.ones((3, 3)))
        with pytest.raises(ValueError):
            conv2d_valid(rng.standard_normal((4, 4)), np.ones(3))


class TestConvOverVolume:
    @pytest.mark.parametrize("C,S,n,N", [(1, 1, 3, 6), (2, 4, 3, 8), (3, 2, 5, 9)])
    def test_matches_oracle(self, rng, C, S, n, N):
        cfg = ConvConfig(C, S, n, n)
        bank = KernelBank(cfg, "cov", rng.standard_normal((S, C, n, n)))
        vol = rng.standard_normal((C, N, N))
        got = conv_over_volume(vol, bank)
        want = oracles.correlate_volume(vol, bank.weights)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)

    def test_batched_equals_stacked_volumes(self, rng):
        cfg = ConvConfig(2, 3, 3, 3)
        bank = KernelBank(cfg, "cov", rng.standard_normal((3, 2, 3, 3)))
        batch = rng.standard_normal((4, 2, 7, 7))
        got = conv_over_volume(batch, bank)
        assert got.shape == (4, 3, 5, 5)
        for b in range(4):
            np.testing.assert_allclose(got[b], conv_over_volume(batch[b], bank))

    def test_real_tensor_round_trip(self, rng):
        cfg = ConvConfig(2, 3, 3, 3)
        bank = KernelBank(cfg, "cov", rng.standard_normal((3, 2, 3, 3)))
        t = RealTensor(rng.standard_normal((2, 2, 6, 6)))
        out = conv_over_volume(t, bank)
        assert isinstance(out, RealTensor)
        assert out.data.shape == (2, 3, 4, 4)
        np.testing.assert_allclose(out.data, conv_over_volume(t.data, bank))

    def test_counter_adds_batch_times_s_times_c(self, rng):
        cfg = ConvConfig(3, 5, 3, 3)
        bank = KernelBank(cfg, "cov", rng.standard_normal((5, 3, 3, 3)))
        ctr = OpCounter()
        conv_over_volume(rng.standard_normal((4, 3, 6, 6)), bank, ctr)
        assert ctr.channel_products == 4 * 5 * 3
        conv_over_volume(rng.standard_normal((3, 6, 6)), bank, ctr)  # batch of 1
        assert ctr.channel_products == 4 * 5 * 3 + 5 * 3

    def test_rejects_cic_bank(self, rng):
        cfg = ConvConfig(2, 4, 3, 3)
        bank = KernelBank.allocate(cfg, "cic")
        with pytest.raises(ValueError):
            conv_over_volume(rng.standard_normal((2, 6, 6)), bank)

    def test_rejects_channel_mismatch(self, rng):
        bank = KernelBank.allocate(ConvConfig(3, 2, 3, 3), "cov")
        with pytest.raises(ValueError):
            conv_over_volume(rng.standard_normal((2, 6, 6)), bank)

    def test_rejects_undersized_image(self):
        bank = KernelBank.allocate(ConvConfig(1, 1, 5, 5), "cov")
        with pytest.raises(ValueError):
            conv_over_volume(np.zeros((1, 4, 8)), bank)

    @settings(max_examples=25, deadline=None)
    @given(
        C=st.integers(1, 3),
        S=st.integers(1, 3),
        n=st.sampled_from([1, 3]),
        extra=st.integers(0, 4),
        data=st.data(),
    )
    def test_property_matches_oracle(self, C, S, n, extra, data):
        N = n + extra
        seed = data.draw(st.integers(0, 2**31 - 1))
        r = np.random.default_rng(seed)
        bank = KernelBank(ConvConfig(C, S, n, n), "cov", r.standard_normal((S, C, n, n)))
        vol = r.standard_normal((C, N, N))
        np.testing.assert_allclose(
            conv_over_volume(vol, bank),
            oracles.correlate_volume(vol, bank.weights),
            rtol=0,
            atol=1e-10,
        )
