"""Pixel condenser network and clip generation tests."""

# run these tests like:
#
#    python -m unittest test_condenser.py


import os
import tempfile
from unittest import TestCase, mock

import numpy as np

from category import build_or_update
from condenser import (ESTIMATE_RANGE, PixelCondenser, check_weights, generate_clip, generate_video, init_weights,
                       stack_skips, weight_shapes, zero_weights)
from errors import ConfigError, DimensionError, InvariantViolation
from models import CondenserConfig, MemoryBank, Vocabulary
from schedule import build_schedule
from semantics import DEFAULT_VOCABULARY, load_semantics, semantic_set
from spectral import dwt2_packet
from storage import write_tensor
from tensors import resize_bicubic

SMALL = CondenserConfig(base_channels=8, token_dim=6, top_k=4, seg_channels=4, groups=2, clip_length=3)
VOCAB = Vocabulary.parse(DEFAULT_VOCABULARY)


def lr_clip(frames=3, size=32, seed=0):
    return np.random.default_rng(seed).uniform(size=(frames, 3, size, size))


class WeightsTestCase(TestCase):
    """Test the weight layout."""

    def test_shapes(self):
        """Do the main parameters have the shapes the network multiplies with?"""

        shapes = weight_shapes(SMALL)
        self.assertEqual(shapes["enc1.in"], (8, 51, 3, 3))
        self.assertEqual(shapes["enc2.in"], (8, 11, 3, 3))
        self.assertEqual(shapes["out"], (48, 8, 3, 3))
        self.assertEqual(shapes["mid1.ca.k"], (6, 8))
        self.assertEqual(shapes["mid1.proj"], (6, 8))
        self.assertEqual(shapes["dec4.cat.q"], (8, 8))
        self.assertEqual(shapes["sem.enc.q"], (6, 6))
        self.assertEqual(shapes["bank2.project"], (8, 6))
        self.assertNotIn("bank3.project", shapes)

    def test_init_is_seeded(self):
        """Are weights reproducible per seed with zero biases?"""

        a = init_weights(SMALL, 1)
        b = init_weights(SMALL, 1)
        c = init_weights(SMALL, 2)
        np.testing.assert_array_equal(a["enc1.in"], b["enc1.in"])
        self.assertFalse(np.allclose(a["enc1.in"], c["enc1.in"]))
        np.testing.assert_array_equal(a["out.bias"], np.zeros(48))
        self.assertLessEqual(np.max(np.abs(a["enc1.in"])), 1 / np.sqrt(51 * 9))

    def test_check(self):
        """Are missing and misshapen weights rejected?"""

        weights = init_weights(SMALL, 0)
        check_weights(weights, SMALL)

        missing = dict(weights)
        del missing["dec3.cat.v"]
        with self.assertRaises(DimensionError):
            check_weights(missing, SMALL)

        wrong = dict(weights)
        wrong["out"] = np.zeros((48, 8, 1, 1))
        with self.assertRaises(DimensionError):
            check_weights(wrong, SMALL)

    def test_bad_config(self):
        """Does a structurally impossible config raise a config error?"""

        cfg = CondenserConfig(upscale=3)
        with self.assertRaises(ConfigError):
            PixelCondenser(cfg, {})


class NetworkTestCase(TestCase):
    """Test the encoder, middle and decoder stages."""

    def setUp(self):
        self.net = PixelCondenser(SMALL, init_weights(SMALL, 0))

    def test_encoder_trace(self):
        """Does a 64x64 frame leave skips at 32, 16 and 8 and features at 8?"""

        lr = np.random.default_rng(1).uniform(size=(3, 64, 64))
        bands = dwt2_packet(np.random.default_rng(2).normal(size=(3, 256, 256)), 2)
        h, skips = self.net.encode(lr, bands, 5)
        self.assertEqual(h.shape, (8, 8, 8))
        self.assertEqual(len(skips), 3)
        self.assertEqual([band[0].shape for band in skips.bands], [(8, 32, 32), (8, 16, 16), (8, 8, 8)])

    def test_encoder_zero_input(self):
        """Does an all-zero input encode to zero features?"""

        h, skips = self.net.encode(np.zeros((3, 32, 32)), np.zeros((48, 32, 32)), 1)
        np.testing.assert_array_equal(h, np.zeros((8, 4, 4)))

    def test_encoder_grid_mismatch(self):
        """Do LR and bands on different grids raise?"""

        with self.assertRaises(DimensionError):
            self.net.encode(np.zeros((3, 32, 32)), np.zeros((48, 16, 16)), 1)

    def test_middle_zero_weights(self):
        """Do zero weights make the middle blocks an identity?"""

        net = PixelCondenser(SMALL, zero_weights(SMALL))
        clip = lr_clip()
        semantics = net.semantics(clip, VOCAB, 0)
        features = np.random.default_rng(3).normal(size=(3, 8, 4, 4))
        np.testing.assert_array_equal(net.middle(features, semantics, 2), features)

    def test_semantics(self):
        """Are clip tokens fused from all frames?"""

        semantics = self.net.semantics(lr_clip(), VOCAB, 0)
        self.assertEqual(semantics.o_tokens.shape, (3, 4, 6))
        self.assertEqual(semantics.clip_tokens.shape, (4, 6))
        self.assertEqual(semantics.seg_features.shape, (3, 4, 4, 4))

    def test_decode_shapes(self):
        """Does the decoder return HR residuals and four feature scales?"""

        clip = lr_clip()
        semantics = self.net.semantics(clip, VOCAB, 0)
        rng = np.random.default_rng(4)
        encoded = [self.net.encode(frame, rng.normal(size=(48, 32, 32)), 2) for frame in clip]
        features = np.stack([h for h, _ in encoded])
        skips = stack_skips([s for _, s in encoded])

        bank = MemoryBank.zeros(SMALL.groups, SMALL.token_dim, SMALL.base_channels)
        residual, collected = self.net.decode(features, skips, semantics, bank, 2)
        self.assertEqual(residual.shape, (3, 3, 128, 128))
        self.assertEqual([f.shape for f in collected], [(3, 8, 8, 8), (3, 8, 16, 16), (3, 8, 32, 32), (3, 8, 32, 32)])
        self.assertEqual(len(skips), 0)


class GenerateClipTestCase(TestCase):
    """Test clip generation."""

    def setUp(self):
        self.sched = build_schedule(T=3)
        self.clip = lr_clip()

    def test_shapes_and_bank(self):
        """Is the output an upscaled clip and the bank refreshed once?"""

        sr, bank = generate_clip(self.clip, self.sched, SMALL, seed=1)
        self.assertEqual(sr.shape, (3, 3, 128, 128))
        self.assertTrue(np.all(np.isfinite(sr)))
        self.assertEqual(bank.updates, 1)
        self.assertEqual(bank.semantics.shape, (2, 6, 6))
        self.assertEqual(bank.textures.shape, (2, 6, 8))

    def test_deterministic(self):
        """Do equal seeds give bit-identical clips and banks?"""

        a, bank_a = generate_clip(self.clip, self.sched, SMALL, seed=4)
        b, bank_b = generate_clip(self.clip, self.sched, SMALL, seed=4)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(bank_a.textures, bank_b.textures)

    def test_zero_weights_give_bicubic(self):
        """Does a network that predicts no residual return the bicubic upsampling?"""

        sr, _ = generate_clip(self.clip, self.sched, SMALL, weights=zero_weights(SMALL))
        np.testing.assert_allclose(sr, resize_bicubic(self.clip, (128, 128)), atol=1e-10)

    def test_oracle(self):
        """Does the HR oracle, fed through the wavelet packet, reproduce a five frame clip?"""

        lr = lr_clip(frames=5, size=64, seed=6)
        hr = np.random.default_rng(5).uniform(size=(5, 3, 256, 256))
        for kappa in (0.0, 1.0):
            sched = build_schedule(T=3, kappa=kappa)
            sr, bank = generate_video(lr, sched, SMALL, oracle_hr=hr)
            self.assertEqual(sr.shape, hr.shape)
            self.assertLess(np.max(np.abs(sr - hr)), 1e-6)
            self.assertIsNone(bank)

    def test_non_finite_estimate(self):
        """Is a network that predicts NaN an invariant violation rather than garbage frames?"""

        weights = zero_weights(SMALL)
        weights["out.bias"] = np.full_like(weights["out.bias"], np.nan)
        with self.assertRaises(InvariantViolation):
            generate_clip(self.clip, self.sched, SMALL, weights=weights)

    def test_estimate_is_clamped(self):
        """Are wild estimates clamped to the pixel range before they re-enter the chain?"""

        weights = zero_weights(SMALL)
        weights["out.bias"] = np.full_like(weights["out.bias"], 1e6)
        sr, _ = generate_clip(self.clip, self.sched, SMALL, weights=weights)
        self.assertTrue(np.all(np.isfinite(sr)))
        self.assertLessEqual(np.max(sr), ESTIMATE_RANGE[1] + 1e-9)

    def test_bank_updated_once(self):
        """Is the bank written once per clip however many steps run?"""

        with mock.patch("condenser.build_or_update", wraps=build_or_update) as update:
            generate_clip(self.clip, build_schedule(T=4), SMALL)
        self.assertEqual(update.call_count, 1)

    def test_workers(self):
        """Do 1 and 4 workers produce bit-identical output?"""

        a, _ = generate_clip(self.clip, self.sched, SMALL, seed=2, workers=1)
        b, _ = generate_clip(self.clip, self.sched, SMALL, seed=2, workers=4)
        np.testing.assert_array_equal(a, b)

    def test_bad_input(self):
        """Are clips of the wrong rank, channel count or size rejected?"""

        for clip in (np.zeros((3, 32, 32)), np.zeros((2, 1, 32, 32)), np.zeros((2, 3, 36, 36))):
            with self.assertRaises(DimensionError):
                generate_clip(clip, self.sched, SMALL)


class GenerateVideoTestCase(TestCase):
    """Test clip splitting and bank threading."""

    def test_clips_share_the_bank(self):
        """Do seven frames in clips of three update the bank three times?"""

        sr, bank = generate_video(lr_clip(frames=7), build_schedule(T=2), SMALL, seed=0)
        self.assertEqual(sr.shape, (7, 3, 128, 128))
        self.assertEqual(bank.updates, 3)

    def test_bank_carries_over(self):
        """Does the bank left by an earlier clip change what the next clip produces?"""

        sched = build_schedule(T=2)
        frames = lr_clip(frames=3)
        fresh, bank = generate_video(frames, sched, SMALL, seed=0)
        again, _ = generate_video(frames, sched, SMALL, seed=0, bank=bank)
        self.assertFalse(np.allclose(fresh, again))

    def test_bad_oracle(self):
        """Do oracle frames of the wrong size raise?"""

        with self.assertRaises(DimensionError):
            generate_video(lr_clip(), build_schedule(T=2), SMALL, oracle_hr=np.zeros((3, 3, 64, 64)))

    def test_loaded_semantics(self):
        """Do semantics read from tensor files give the same video as the built-in distiller?"""

        sched = build_schedule(T=2)
        frames = lr_clip(frames=5)
        built = semantic_set(frames, VOCAB, 0, SMALL.top_k, SMALL.token_dim, SMALL.seg_channels, SMALL.seg_stride)
        with tempfile.TemporaryDirectory() as tmp:
            tokens = os.path.join(tmp, "tokens.seet")
            seg = os.path.join(tmp, "seg.seet")
            write_tensor(tokens, built.o_tokens)
            write_tensor(seg, built.seg_features)
            loaded = load_semantics(tokens, seg, 0)

        expected, expected_bank = generate_video(frames, sched, SMALL, seed=0)
        sr, bank = generate_video(frames, sched, SMALL, seed=0, semantics=loaded)
        np.testing.assert_array_equal(sr, expected)
        np.testing.assert_array_equal(bank.semantics, expected_bank.semantics)
        self.assertEqual(bank.updates, 2)

    def test_loaded_semantics_must_fit(self):
        """Are loaded semantics with the wrong frame count, token width or channels rejected?"""

        sched = build_schedule(T=2)
        frames = lr_clip(frames=3)
        built = semantic_set(frames, VOCAB, 0, SMALL.top_k, SMALL.token_dim, SMALL.seg_channels, SMALL.seg_stride)
        wide = semantic_set(frames, VOCAB, 0, SMALL.top_k, SMALL.token_dim + 2, SMALL.seg_channels, SMALL.seg_stride)
        deep = semantic_set(frames, VOCAB, 0, SMALL.top_k, SMALL.token_dim, SMALL.seg_channels + 1, SMALL.seg_stride)
        for semantics, clip in ((built, lr_clip(frames=4)), (wide, frames), (deep, frames)):
            with self.assertRaises(DimensionError):
                generate_video(clip, sched, SMALL, seed=0, semantics=semantics)

    def test_bad_rank(self):
        """Does a single frame without a frame axis raise?"""

        with self.assertRaises(DimensionError):
            generate_video(np.zeros((3, 32, 32)), build_schedule(T=2), SMALL)

    def test_default_config(self):
        """Does the default config take five 64x64 frames to finite 256x256 frames over 15 steps?"""

        sr, bank = generate_video(lr_clip(frames=5, size=64), build_schedule(), CondenserConfig(), seed=0)
        self.assertEqual(sr.shape, (5, 3, 256, 256))
        self.assertTrue(np.all(np.isfinite(sr)))
        self.assertEqual(bank.updates, 1)
