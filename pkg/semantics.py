"""Deterministic stand-in for the open-vocabulary semantic distiller.

Text embeddings are seeded projections of hashed character trigrams; image
tokens and segmentation features are seeded projections of non-overlapping
stride x stride frame patches. Only the interface matters here: tokens,
segmentation features and top-k selection flow through the network exactly
as a real distiller's output would.
"""

import math
import zlib

import numpy as np
from einops import rearrange

from errors import DataError, DimensionError
from models import SemanticSet, Vocabulary
from noise import KeyedNoise
from storage import read_tensor
from tensors import matmul

TRIGRAM_BUCKETS = 256
DEFAULT_VOCABULARY = "sky,building,road,person,car,tree,water,grass"


def _trigram_counts(word):
    padded = f"#{word.lower()}#"
    counts = np.zeros(TRIGRAM_BUCKETS)
    for i in range(max(len(padded) - 2, 1)):
        gram = padded[i:i + 3]
        counts[zlib.crc32(gram.encode("utf-8")) % TRIGRAM_BUCKETS] += 1
    return counts


def _patches(frame, stride):
    h, w = frame.shape[-2:]
    pad_h, pad_w = (-h) % stride, (-w) % stride
    if pad_h or pad_w:
        frame = np.pad(frame, [(0, 0), (0, pad_h), (0, pad_w)], mode="edge")
    return rearrange(frame, "c (h p1) (w p2) -> h w (c p1 p2)", p1=stride, p2=stride)


def distill(frame, vocab, seed, token_dim=32, seg_channels=16, stride=8):
    """Image tokens (M x d), text embeddings (|V| x d) and segmentation features (d_p x h x w)."""

    if not isinstance(vocab, Vocabulary):
        vocab = Vocabulary(tuple(vocab))

    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 3:
        raise DimensionError(f"expected a (C, H, W) frame, got {frame.shape}")

    noise = KeyedNoise(seed)
    patches = _patches(frame, stride)
    feat = patches.shape[-1]
    bound = 1.0 / math.sqrt(feat)

    w_img = noise.uniform((feat, token_dim), -bound, bound, "distill", "image")
    w_seg = noise.uniform((feat, seg_channels), -bound, bound, "distill", "seg")
    w_txt = noise.uniform((TRIGRAM_BUCKETS, token_dim), -1.0, 1.0, "distill", "text")

    f_img = rearrange(matmul(patches, w_img), "h w d -> (h w) d")
    seg = rearrange(matmul(patches, w_seg), "h w d -> d h w")
    f_txt = matmul(np.stack([_trigram_counts(word) for word in vocab.entries]), w_txt)
    return f_img, f_txt, seg


def cosine_similarity(a, b):
    """Pairwise cosine between rows of a and rows of b; zero vectors score 0."""

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = np.linalg.norm(a, axis=-1)[:, None]
    nb = np.linalg.norm(b, axis=-1)[None, :]
    denom = na * nb
    sim = np.divide(matmul(a, b.T), denom, out=np.zeros((a.shape[0], b.shape[0])), where=denom > 0)
    return np.clip(sim, -1.0, 1.0)


def select_topk(f_img, f_txt, k):
    """Keep the k image tokens that best match any text embedding.

    Ranked by best-match cosine, highest first; ties go to the lower index.
    """

    m = f_img.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k={k} outside 1..{m}")

    score = cosine_similarity(f_img, f_txt).max(axis=1)
    order = np.lexsort((np.arange(m), -score))[:k]
    return f_img[order], order


def semantic_set(lr_clip, vocab, seed, top_k=8, token_dim=32, seg_channels=16, stride=8):
    """Distill every frame of a clip and draw the initializer tokens."""

    o_tokens, segs = [], []
    for frame in lr_clip:
        f_img, f_txt, seg = distill(frame, vocab, seed, token_dim, seg_channels, stride)
        tokens, _ = select_topk(f_img, f_txt, top_k)
        o_tokens.append(tokens)
        segs.append(seg)

    init = KeyedNoise(seed).normal((top_k, token_dim), "init_tokens")
    return SemanticSet(o_tokens=np.stack(o_tokens), seg_features=np.stack(segs), init_tokens=init)


def load_semantics(o_path, seg_path, seed):
    """Semantics computed elsewhere, read from two tensor files.

    o_path holds O_i as (m, k, d); seg_path holds P_i as (m, d_p, h, w).
    """

    o_tokens = read_tensor(o_path)
    seg = read_tensor(seg_path)
    if o_tokens.ndim != 3 or seg.ndim != 4:
        raise DataError(f"expected (m, k, d) tokens and (m, d_p, h, w) features, got {o_tokens.shape} and {seg.shape}")
    if o_tokens.shape[0] != seg.shape[0]:
        raise DataError(f"{o_tokens.shape[0]} token frames but {seg.shape[0]} feature frames")

    k, d = o_tokens.shape[1:]
    init = KeyedNoise(seed).normal((k, d), "init_tokens")
    return SemanticSet(o_tokens=o_tokens, seg_features=seg, init_tokens=init)
