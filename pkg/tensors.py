"""Dense tensor arithmetic and attention primitives.

Tensors are plain numpy arrays. Attention functions accept arbitrary leading
batch axes; the last two axes are (tokens, features). Nothing here holds
state, so every function is safe to call from several threads.
"""

import math

import cv2
import numpy as np
from einops import rearrange
from numpy.lib.stride_tricks import sliding_window_view

from errors import DimensionError
from models import AttentionParams


##############################################################################
# Arithmetic


def matmul(a, b):
    """Matrix product over the last two axes, broadcasting the rest."""

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim < 1 or b.ndim < 1:
        raise DimensionError("matmul needs at least one axis on each operand")

    inner_b = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if a.shape[-1] != inner_b:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def softmax_rows(m, axis=-1):
    """Softmax along `axis`; the row max is subtracted first."""

    m = np.asarray(m, dtype=float)
    shifted = m - np.max(m, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def relu(x):
    return np.maximum(x, 0.0)


def l2_normalize(x, axis=-1):
    """Unit rows; zero rows stay zero."""

    norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def sinusoidal_embedding(t, dim):
    """Transformer-style embedding of a scalar step index."""

    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = t * freqs
    emb = np.concatenate([np.sin(angles), np.cos(angles)])
    if dim % 2:
        emb = np.concatenate([emb, [0.0]])
    return emb


##############################################################################
# Attention


def init_attention(noise, name, d_in, d, heads=1, d_kv=None):
    """Seeded projections, uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""

    d_kv = d_in if d_kv is None else d_kv
    width = d * heads
    bq = 1.0 / math.sqrt(d_in)
    bkv = 1.0 / math.sqrt(d_kv)
    return AttentionParams(
        w_q=noise.uniform((d_in, width), -bq, bq, name, "q"),
        w_k=noise.uniform((d_kv, width), -bkv, bkv, name, "k"),
        w_v=noise.uniform((d_kv, width), -bkv, bkv, name, "v"),
        d=d,
        heads=heads,
    )


def cross_attention(queries, keys_values, params):
    """SoftMax(Q K^T / sqrt(d)) V with Q from `queries`, K and V from `keys_values`.

    queries: (..., n, d_in); keys_values: (..., k, d_kv) -> (..., n, d * heads)
    """

    queries = np.asarray(queries, dtype=float)
    keys_values = np.asarray(keys_values, dtype=float)
    if queries.shape[-1] != params.w_q.shape[0]:
        raise DimensionError(f"query features {queries.shape[-1]} do not match W_q {params.w_q.shape}")
    if keys_values.shape[-1] != params.w_k.shape[0]:
        raise DimensionError(f"key/value features {keys_values.shape[-1]} do not match W_k {params.w_k.shape}")

    q = rearrange(matmul(queries, params.w_q), "... n (h d) -> ... h n d", h=params.heads)
    k = rearrange(matmul(keys_values, params.w_k), "... n (h d) -> ... h n d", h=params.heads)
    v = rearrange(matmul(keys_values, params.w_v), "... n (h d) -> ... h n d", h=params.heads)

    scores = np.matmul(q, np.swapaxes(k, -1, -2)) / math.sqrt(params.d)
    out = np.matmul(softmax_rows(scores), v)
    return rearrange(out, "... h n d -> ... n (h d)")


def self_attention(tokens, params):
    return cross_attention(tokens, tokens, params)


def multi_frame_self_attention(frames, params):
    """Self-attention over the joint token sequence of all frames.

    frames: (..., m, tokens, d_in) -> (..., m, tokens, d * heads). No
    positional encoding, so permuting frames permutes the output.
    """

    frames = np.asarray(frames, dtype=float)
    if frames.ndim < 3 or frames.shape[-3] < 1:
        raise DimensionError(f"expected (..., m, tokens, features), got {frames.shape}")

    m = frames.shape[-3]
    joint = rearrange(frames, "... m n c -> ... (m n) c")
    out = self_attention(joint, params)
    return rearrange(out, "... (m n) c -> ... m n c", m=m)


def window_partition(feat, window):
    """(..., C, H, W) -> (..., nH, nW, window*window, C), reflect-padding H and W."""

    if window < 1:
        raise ValueError(f"window must be positive, got {window}")

    h, w = feat.shape[-2:]
    pad_h, pad_w = (-h) % window, (-w) % window
    if pad_h or pad_w:
        pad = [(0, 0)] * (feat.ndim - 2) + [(0, pad_h), (0, pad_w)]
        feat = np.pad(feat, pad, mode="reflect")
    return rearrange(feat, "... c (nh wh) (nw ww) -> ... nh nw (wh ww) c", wh=window, ww=window)


def window_reverse(windows, window, height, width):
    """Inverse of window_partition, cropping the padding away."""

    feat = rearrange(windows, "... nh nw (wh ww) c -> ... c (nh wh) (nw ww)", wh=window, ww=window)
    return feat[..., :height, :width]


def window_self_attention(feat, window, params):
    """Self-attention inside non-overlapping spatial windows.

    feat: (..., C, H, W) -> (..., d * heads, H, W)
    """

    feat = np.asarray(feat, dtype=float)
    h, w = feat.shape[-2:]
    windows = window_partition(feat, window)
    return window_reverse(self_attention(windows, params), window, h, w)


def channel_self_attention(feat, params):
    """Transposed attention: channels are tokens, spatial positions are features.

    Projections act pixelwise on the channel axis; queries and keys are
    L2-normalized along the spatial axis before the product.
    feat: (..., C, H, W) -> (..., d * heads, H, W)
    """

    feat = np.asarray(feat, dtype=float)
    if feat.shape[-3] != params.w_q.shape[0]:
        raise DimensionError(f"channels {feat.shape[-3]} do not match W_q {params.w_q.shape}")

    h, w = feat.shape[-2:]
    pixels = rearrange(feat, "... c h w -> ... h w c")
    q, k, v = (rearrange(matmul(pixels, proj), "... h w (n d) -> ... n d (h w)", n=params.heads)
               for proj in (params.w_q, params.w_k, params.w_v))

    attn = softmax_rows(np.matmul(l2_normalize(q), np.swapaxes(l2_normalize(k), -1, -2)))
    out = np.matmul(attn, v)
    return rearrange(out, "... n d (h w) -> ... (n d) h w", h=h, w=w)


##############################################################################
# Convolution and resampling


def conv2d(x, weight, bias=None):
    """Stride-1 'same' convolution with zero padding.

    x: (..., C_in, H, W); weight: (C_out, C_in, kh, kw); bias: (C_out,)
    """

    x = np.asarray(x, dtype=float)
    c_out, c_in, kh, kw = weight.shape
    if x.shape[-3] != c_in:
        raise DimensionError(f"conv expects {c_in} input channels, got {x.shape[-3]}")

    pad = [(0, 0)] * (x.ndim - 2) + [(kh // 2, kh // 2), (kw // 2, kw // 2)]
    cols = sliding_window_view(np.pad(x, pad), (kh, kw), axis=(-2, -1))
    cols = np.moveaxis(cols, -5, -3)
    cols = cols.reshape(cols.shape[:-3] + (c_in * kh * kw,))

    out = np.matmul(cols, weight.reshape(c_out, -1).T)
    if bias is not None:
        out = out + bias
    return np.moveaxis(out, -1, -3)


def nearest_resize(x, size):
    """Nearest-neighbour resize of the last two axes to `size`."""

    height, width = size
    rows = np.arange(height) * x.shape[-2] // height
    cols = np.arange(width) * x.shape[-1] // width
    return np.take(np.take(x, rows, axis=-2), cols, axis=-1)


def _resize_planes(x, size, interpolation):
    height, width = size
    planes = np.asarray(x, dtype=np.float64).reshape((-1,) + x.shape[-2:])
    out = np.stack([cv2.resize(plane, (width, height), interpolation=interpolation) for plane in planes])
    return out.reshape(x.shape[:-2] + (height, width))


def resize_bicubic(x, size):
    return _resize_planes(x, size, cv2.INTER_CUBIC)


def resize_area(x, size):
    return _resize_planes(x, size, cv2.INTER_AREA)
