"""Instance-centric alignment: semantic modulation, embedding and clip-wise alignment."""

import numpy as np
from einops import rearrange

from errors import DimensionError
from models import ModulationPair
from tensors import (conv2d, cross_attention, matmul, multi_frame_self_attention, nearest_resize, relu,
                     self_attention)

GATE_MODES = ("max", "mean")


def modulation_pairs(seg, w1, b1, w2, b2, size):
    """conv -> ReLU -> conv over segmentation features, split into (gamma, beta).

    seg: (..., d_p, h, w) resized to `size` by nearest neighbour first.
    w2 must produce an even channel count; the first half is gamma.
    """

    if w2.shape[0] % 2:
        raise DimensionError(f"modulation conv must emit an even channel count, got {w2.shape[0]}")

    seg = nearest_resize(np.asarray(seg, dtype=float), size)
    out = conv2d(relu(conv2d(seg, w1, b1)), w2, b2)
    half = out.shape[-3] // 2
    return ModulationPair(gamma=out[..., :half, :, :], beta=out[..., half:, :, :])


def modulate(f, pair):
    """F = (f * gamma + beta) + f."""

    if pair.gamma.shape != f.shape or pair.beta.shape != f.shape:
        raise DimensionError(f"modulation {pair.gamma.shape}/{pair.beta.shape} does not match features {f.shape}")
    return (f * pair.gamma + pair.beta) + f


def embed_semantics(feat, tokens, params):
    """Cross-attend every pixel of `feat` (..., C, H, W) to semantic tokens (..., k, d)."""

    h, w = feat.shape[-2:]
    pixels = rearrange(feat, "... c h w -> ... (h w) c")
    out = cross_attention(pixels, tokens, params)
    return rearrange(out, "... (h w) c -> ... c h w", h=h, w=w)


def clip_tokens(per_frame_tokens, init, enc_params, dec_params):
    """Fuse per-frame tokens (m, k, d) into clip tokens O_c (k', d).

    One self-attention layer encodes the joint token sequence; one
    cross-attention layer decodes it with the initializer tokens as queries.
    """

    per_frame_tokens = np.asarray(per_frame_tokens, dtype=float)
    if per_frame_tokens.ndim != 3 or per_frame_tokens.shape[0] < 1:
        raise DimensionError(f"expected (m, k, d) tokens, got {per_frame_tokens.shape}")

    z = rearrange(per_frame_tokens, "m k d -> (m k) d")
    z = z + self_attention(z, enc_params)
    return init + cross_attention(init, z, dec_params)


def activation_gate(o_c, f_hat, gate_mode="max"):
    """Per-pixel cosine activation of features against the clip tokens, CAM style.

    Gates lie in [-1, 1]; a zero feature or zero token scores 0.
    """

    if gate_mode not in GATE_MODES:
        raise ValueError(f"gate_mode must be one of {GATE_MODES}, got {gate_mode!r}")

    dots = matmul(f_hat, np.swapaxes(o_c, -1, -2))
    norms = np.linalg.norm(f_hat, axis=-1, keepdims=True) * np.linalg.norm(o_c, axis=-1)
    act = np.divide(dots, norms, out=np.zeros(dots.shape), where=norms > 0)
    gate = act.max(axis=-1) if gate_mode == "max" else act.mean(axis=-1)
    return gate[..., None]


def align(o_c, f_hat, params, gate_mode="max"):
    """Gate features by clip-token activation, then attend across all frames.

    o_c: (k, d); f_hat: (..., m, tokens, d) -> (..., m, tokens, d * heads)
    """

    o_c = np.asarray(o_c, dtype=float)
    f_hat = np.asarray(f_hat, dtype=float)
    if o_c.shape[-1] != f_hat.shape[-1]:
        raise DimensionError(f"clip tokens {o_c.shape} and features {f_hat.shape} disagree on feature width")

    gated = f_hat * activation_gate(o_c, f_hat, gate_mode)
    return multi_frame_self_attention(gated, params)
