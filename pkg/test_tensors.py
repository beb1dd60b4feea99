"""Tensor and attention primitive tests."""

# run these tests like:
#
#    python -m unittest test_tensors.py


import math
from unittest import TestCase

import numpy as np
from einops import rearrange

from errors import DimensionError
from models import AttentionParams
from noise import KeyedNoise
from tensors import (channel_self_attention, conv2d, cross_attention, init_attention, matmul,
                     multi_frame_self_attention, self_attention, softmax_rows, window_self_attention)


def attention_oracle(x, y, params):
    """Single-head attention written out step by step."""

    q = x @ params.w_q
    k = y @ params.w_k
    v = y @ params.w_v
    scores = q @ k.T / math.sqrt(params.d)
    weights = np.exp(scores - scores.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


class MatmulTestCase(TestCase):
    """Test matmul and softmax."""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_identity(self):
        """Does I x M give back M?"""

        m = self.rng.normal(size=(3, 5))
        np.testing.assert_array_equal(matmul(np.eye(3), m), m)

    def test_small_product(self):
        """Does a hand-checkable 2x2 product come out right?"""

        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[0.0], [1.0]]))
        np.testing.assert_array_equal(out, [[2.0], [4.0]])

    def test_triple_loop_oracle(self):
        """Does matmul agree with a naive triple loop?"""

        a = self.rng.normal(size=(8, 8))
        b = self.rng.normal(size=(8, 8))
        expected = np.zeros((8, 8))
        for i in range(8):
            for j in range(8):
                for k in range(8):
                    expected[i, j] += a[i, k] * b[k, j]
        self.assertLess(np.max(np.abs(matmul(a, b) - expected)), 1e-12)

    def test_mismatch(self):
        """Do disagreeing inner dimensions raise a dimension error?"""

        with self.assertRaises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_softmax_closed_forms(self):
        """Does softmax give uniform rows for zeros and [1/4, 3/4] for [0, ln 3]?"""

        np.testing.assert_allclose(softmax_rows(np.zeros((1, 4))), [[0.25] * 4], atol=1e-15)
        np.testing.assert_allclose(softmax_rows(np.array([[0.0, math.log(3)]])), [[0.25, 0.75]], atol=1e-12)

    def test_softmax_shift_invariance(self):
        """Does adding 1000 to a row leave its softmax unchanged?"""

        row = self.rng.normal(size=(3, 7))
        np.testing.assert_allclose(softmax_rows(row + 1000), softmax_rows(row), atol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        """Do rows sum to 1 for random, large-magnitude inputs?"""

        for _ in range(50):
            m = self.rng.normal(scale=50, size=(6, 11))
            out = softmax_rows(m)
            self.assertTrue(np.all(out >= 0))
            np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_other_axis(self):
        """Does axis=-2 normalize columns instead of rows?"""

        out = softmax_rows(self.rng.normal(size=(4, 3)), axis=-2)
        np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-12)


class AttentionTestCase(TestCase):
    """Test cross, multi-frame, window and channel attention."""

    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.noise = KeyedNoise(7)

    def test_single_key(self):
        """Does every query receive the projected value of a single key?"""

        params = init_attention(self.noise, "single", 6, 4)
        queries = self.rng.normal(size=(3, 6))
        kv = self.rng.normal(size=(1, 6))
        out = cross_attention(queries, kv, params)
        for row in out:
            np.testing.assert_allclose(row, (kv @ params.w_v)[0], atol=1e-12)

    def test_duplicated_keys(self):
        """Do duplicated key/value rows act like one row?"""

        params = init_attention(self.noise, "dup", 5, 3)
        queries = self.rng.normal(size=(4, 5))
        kv = self.rng.normal(size=(1, 5))
        np.testing.assert_allclose(cross_attention(queries, np.repeat(kv, 3, axis=0), params),
                                   cross_attention(queries, kv, params), atol=1e-12)

    def test_formula_oracle(self):
        """Does cross attention match the written-out formula (3 queries x 5 kv, d=4)?"""

        params = init_attention(self.noise, "oracle", 6, 4)
        x = self.rng.normal(size=(3, 6))
        y = self.rng.normal(size=(5, 6))
        self.assertLess(np.max(np.abs(cross_attention(x, y, params) - attention_oracle(x, y, params))), 1e-12)

    def test_convex_hull(self):
        """With identity projections, does every output lie inside the value rows' box?"""

        params = AttentionParams.identity(4)
        y = self.rng.normal(size=(6, 4))
        out = cross_attention(self.rng.normal(size=(10, 4)), y, params)
        self.assertTrue(np.all(out >= y.min(axis=0) - 1e-12))
        self.assertTrue(np.all(out <= y.max(axis=0) + 1e-12))

    def test_multi_head_shape(self):
        """Do heads concatenate to d * heads features?"""

        params = init_attention(self.noise, "heads", 8, 4, heads=2)
        self.assertEqual(cross_attention(np.ones((3, 8)), np.ones((5, 8)), params).shape, (3, 8))

    def test_dimension_mismatch(self):
        """Do wrong feature widths raise a dimension error?"""

        params = init_attention(self.noise, "bad", 6, 4)
        with self.assertRaises(DimensionError):
            cross_attention(np.ones((3, 5)), np.ones((2, 6)), params)
        with self.assertRaises(DimensionError):
            cross_attention(np.ones((3, 6)), np.ones((2, 5)), params)

    def test_mfsa_single_frame(self):
        """Is MFSA on one frame plain self-attention?"""

        params = init_attention(self.noise, "mfsa", 8, 8)
        frame = self.rng.normal(size=(16, 8))
        np.testing.assert_allclose(multi_frame_self_attention(frame[None], params)[0],
                                   self_attention(frame, params), atol=1e-12)

    def test_mfsa_shape(self):
        """Does (5, 16, 8) map to (5, 16, d * heads)?"""

        params = init_attention(self.noise, "mfsa-shape", 8, 3, heads=2)
        self.assertEqual(multi_frame_self_attention(np.ones((5, 16, 8)), params).shape, (5, 16, 6))

    def test_mfsa_permutation_equivariance(self):
        """Does permuting frames permute the output identically?"""

        params = init_attention(self.noise, "perm", 8, 8)
        for trial in range(50):
            frames = self.rng.normal(size=(4, 6, 8))
            perm = self.rng.permutation(4)
            np.testing.assert_allclose(multi_frame_self_attention(frames[perm], params),
                                       multi_frame_self_attention(frames, params)[perm], atol=1e-12)

    def test_full_window_is_global(self):
        """Is one window covering the whole map global self-attention?"""

        params = init_attention(self.noise, "window", 5, 5)
        feat = self.rng.normal(size=(5, 8, 8))
        tokens = rearrange(feat, "c h w -> (h w) c")
        expected = rearrange(self_attention(tokens, params), "(h w) c -> c h w", h=8, w=8)
        np.testing.assert_allclose(window_self_attention(feat, 8, params), expected, atol=1e-12)

    def test_constant_map(self):
        """Does a constant map stay constant per channel under window and channel attention?"""

        feat = np.ones((4, 8, 8)) * np.arange(1, 5)[:, None, None]
        for out in (window_self_attention(feat, 4, init_attention(self.noise, "const-w", 4, 4)),
                    channel_self_attention(feat, init_attention(self.noise, "const-c", 4, 4))):
            spread = out.max(axis=(1, 2)) - out.min(axis=(1, 2))
            self.assertLess(np.max(spread), 1e-12)

    def test_windows_are_independent(self):
        """Does perturbing one window leave the other three untouched?"""

        params = init_attention(self.noise, "indep", 3, 3)
        feat = self.rng.normal(size=(1, 3, 8, 8))
        bumped = feat.copy()
        bumped[0, :, 1, 2] += 5.0

        before = window_self_attention(feat, 4, params)
        after = window_self_attention(bumped, 4, params)
        self.assertGreater(np.max(np.abs(after[..., :4, :4] - before[..., :4, :4])), 0)
        for rows, cols in ((slice(0, 4), slice(4, 8)), (slice(4, 8), slice(0, 4)), (slice(4, 8), slice(4, 8))):
            np.testing.assert_allclose(after[..., rows, cols], before[..., rows, cols], rtol=0, atol=1e-14)

    def test_window_padding(self):
        """Does a window that does not divide the map still return the input size?"""

        params = init_attention(self.noise, "pad", 3, 3)
        self.assertEqual(window_self_attention(self.rng.normal(size=(3, 6, 7)), 4, params).shape, (3, 6, 7))

    def test_pure(self):
        """Do repeated calls give bit-identical results?"""

        params = init_attention(self.noise, "pure", 4, 4)
        feat = self.rng.normal(size=(2, 4, 8, 8))
        np.testing.assert_array_equal(channel_self_attention(feat, params), channel_self_attention(feat, params))
        np.testing.assert_array_equal(window_self_attention(feat, 4, params), window_self_attention(feat, 4, params))


class ConvTestCase(TestCase):
    """Test the same-padding convolution."""

    def test_loop_oracle(self):
        """Does conv2d match an explicit zero-padded loop?"""

        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 5, 6))
        weight = rng.normal(size=(3, 2, 3, 3))
        bias = rng.normal(size=3)

        padded = np.pad(x, [(0, 0), (1, 1), (1, 1)])
        expected = np.zeros((3, 5, 6))
        for o in range(3):
            for i in range(5):
                for j in range(6):
                    expected[o, i, j] = np.sum(padded[:, i:i + 3, j:j + 3] * weight[o]) + bias[o]
        np.testing.assert_allclose(conv2d(x, weight, bias), expected, atol=1e-12)

    def test_batch_axes(self):
        """Do leading batch axes pass through?"""

        weight = np.ones((4, 3, 3, 3))
        self.assertEqual(conv2d(np.ones((2, 5, 3, 8, 8)), weight).shape, (2, 5, 4, 8, 8))

    def test_channel_mismatch(self):
        """Does the wrong channel count raise a dimension error?"""

        with self.assertRaises(DimensionError):
            conv2d(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))
