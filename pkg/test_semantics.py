"""Semantic distiller and top-k selection tests."""

# run these tests like:
#
#    python -m unittest test_semantics.py


import os
import tempfile
from unittest import TestCase

import numpy as np

from errors import DataError, DimensionError
from models import Vocabulary
from semantics import DEFAULT_VOCABULARY, cosine_similarity, distill, load_semantics, select_topk, semantic_set
from storage import write_tensor

VOCAB = Vocabulary.parse(DEFAULT_VOCABULARY)


class VocabularyTestCase(TestCase):
    """Test the vocabulary model."""

    def test_parse(self):
        """Are comma-separated words trimmed and kept in order?"""

        self.assertEqual(Vocabulary.parse(" sky, car ,tree,").entries, ("sky", "car", "tree"))
        self.assertEqual(len(VOCAB), 8)

    def test_invalid(self):
        """Are empty and repeated vocabularies rejected?"""

        with self.assertRaises(ValueError):
            Vocabulary.parse(" , ")
        with self.assertRaises(ValueError):
            Vocabulary(("sky", "sky"))


class DistillTestCase(TestCase):
    """Test the deterministic distiller."""

    def setUp(self):
        self.frame = np.random.default_rng(0).uniform(size=(3, 32, 32))

    def test_shapes(self):
        """Does a 32x32 frame at stride 8 give 16 tokens, one embedding per word and a 4x4 feature map?"""

        f_img, f_txt, seg = distill(self.frame, VOCAB, seed=1)
        self.assertEqual(f_img.shape, (16, 32))
        self.assertEqual(f_txt.shape, (8, 32))
        self.assertEqual(seg.shape, (16, 4, 4))

    def test_options(self):
        """Do token_dim, seg_channels and stride reshape the outputs?"""

        f_img, f_txt, seg = distill(self.frame, ["a", "b"], seed=1, token_dim=6, seg_channels=3, stride=4)
        self.assertEqual(f_img.shape, (64, 6))
        self.assertEqual(f_txt.shape, (2, 6))
        self.assertEqual(seg.shape, (3, 8, 8))

    def test_padding(self):
        """Is a frame that the stride does not divide edge-padded?"""

        f_img, _, seg = distill(self.frame[:, :30, :27], VOCAB, seed=1)
        self.assertEqual(f_img.shape, (16, 32))
        self.assertEqual(seg.shape, (16, 4, 4))

    def test_deterministic(self):
        """Do equal seeds agree bit for bit and different seeds differ?"""

        a = distill(self.frame, VOCAB, seed=3)
        b = distill(self.frame, VOCAB, seed=3)
        c = distill(self.frame, VOCAB, seed=4)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
        self.assertFalse(np.allclose(a[0], c[0]))

    def test_text_independent_of_frame(self):
        """Do the word embeddings ignore the frame?"""

        _, a, _ = distill(self.frame, VOCAB, seed=2)
        _, b, _ = distill(np.zeros((3, 16, 16)), VOCAB, seed=2)
        np.testing.assert_array_equal(a, b)

    def test_bad_frame(self):
        """Does a frame without a channel axis raise a dimension error?"""

        with self.assertRaises(DimensionError):
            distill(np.zeros((32, 32)), VOCAB, seed=0)


class SelectTopkTestCase(TestCase):
    """Test cosine scoring and top-k selection."""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_cosine(self):
        """Do parallel, orthogonal and zero rows score 1, 0 and 0?"""

        a = np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
        b = np.array([[3.0, 0.0]])
        np.testing.assert_allclose(cosine_similarity(a, b), [[1.0], [0.0], [0.0]], atol=1e-15)

    def test_brute_force(self):
        """Does selection match sorting every token by its best cosine?"""

        for _ in range(20):
            f_img = self.rng.normal(size=(12, 5))
            f_txt = self.rng.normal(size=(4, 5))
            scores = []
            for i, row in enumerate(f_img):
                best = max(row @ w / (np.linalg.norm(row) * np.linalg.norm(w)) for w in f_txt)
                scores.append((-best, i))
            expected = [i for _, i in sorted(scores)[:5]]

            tokens, order = select_topk(f_img, f_txt, 5)
            self.assertEqual(list(order), expected)
            np.testing.assert_array_equal(tokens, f_img[expected])

    def test_ties_go_to_lower_index(self):
        """With duplicated tokens, is the earlier copy chosen first?"""

        row = self.rng.normal(size=(1, 4))
        f_img = np.concatenate([self.rng.normal(size=(2, 4)) * 0.01 - row, row, row, row])
        _, order = select_topk(f_img, row, 2)
        self.assertEqual(list(order), [2, 3])

    def test_permutation(self):
        """Does shuffling the image tokens select the same tokens?"""

        f_img = self.rng.normal(size=(10, 6))
        f_txt = self.rng.normal(size=(3, 6))
        perm = self.rng.permutation(10)
        a, _ = select_topk(f_img, f_txt, 4)
        b, _ = select_topk(f_img[perm], f_txt, 4)
        np.testing.assert_array_equal(a, b)

    def test_k_range(self):
        """Is k outside 1..M rejected?"""

        f_img = self.rng.normal(size=(4, 3))
        for k in (0, 5):
            with self.assertRaises(ValueError):
                select_topk(f_img, f_img, k)


class SemanticSetTestCase(TestCase):
    """Test clip-level semantics."""

    def setUp(self):
        self.clip = np.random.default_rng(2).uniform(size=(3, 3, 32, 32))

    def test_shapes(self):
        """Are O_i (m, k, d), P_i (m, d_p, h, w) and the initializer (k, d)?"""

        sem = semantic_set(self.clip, VOCAB, seed=0, top_k=4, token_dim=8, seg_channels=5)
        self.assertEqual(sem.o_tokens.shape, (3, 4, 8))
        self.assertEqual(sem.seg_features.shape, (3, 5, 4, 4))
        self.assertEqual(sem.init_tokens.shape, (4, 8))
        self.assertEqual(sem.frames, 3)
        self.assertIsNone(sem.clip_tokens)

    def test_frames_are_independent(self):
        """Are a frame's tokens the same inside and outside the clip?"""

        whole = semantic_set(self.clip, VOCAB, seed=0, top_k=4)
        alone = semantic_set(self.clip[1:2], VOCAB, seed=0, top_k=4)
        np.testing.assert_array_equal(whole.o_tokens[1], alone.o_tokens[0])
        np.testing.assert_array_equal(whole.init_tokens, alone.init_tokens)

    def test_load(self):
        """Do tensors written to disk come back as a semantic set?"""

        sem = semantic_set(self.clip, VOCAB, seed=5, top_k=4)
        with tempfile.TemporaryDirectory() as tmp:
            o_path = os.path.join(tmp, "o.seet")
            seg_path = os.path.join(tmp, "seg.seet")
            write_tensor(o_path, sem.o_tokens)
            write_tensor(seg_path, sem.seg_features)

            loaded = load_semantics(o_path, seg_path, seed=5)
            np.testing.assert_array_equal(loaded.o_tokens, sem.o_tokens)
            np.testing.assert_array_equal(loaded.seg_features, sem.seg_features)
            np.testing.assert_array_equal(loaded.init_tokens, sem.init_tokens)

            write_tensor(seg_path, sem.seg_features[:2])
            with self.assertRaises(DataError):
                load_semantics(o_path, seg_path, seed=5)
