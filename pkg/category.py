"""Channel-wise texture aggregation memory (the CaTeGory bank).

The bank pairs channel semantics C_j (d x d) with textures T_j (d x C).
Clip tokens O_c (k x d) read it through A_j = softmax(O_c C_j); decoder
features then cross-attend the mixed textures A_j T_j. After each clip the
decoder's multiscale features refresh every group.
"""

from typing import NamedTuple

import numpy as np
from einops import rearrange
from loguru import logger

from errors import DimensionError
from models import AttentionParams, MemoryBank
from tensors import cross_attention, matmul, resize_area, self_attention, softmax_rows

FEATURE_SCALES = 4
SOFTMAX_AXES = {"memory": -1, "token": -2}


class GroupWeights(NamedTuple):
    """Update weights for one bank group."""

    cross: AttentionParams
    refine: AttentionParams
    project: np.ndarray


def channel_affinity(o_c, semantics, softmax_axis="memory"):
    """A_j = softmax(O_c C_j) for every group at once: (J, k, d)."""

    if softmax_axis not in SOFTMAX_AXES:
        raise ValueError(f"softmax_axis must be one of {tuple(SOFTMAX_AXES)}, got {softmax_axis!r}")
    if o_c.shape[-1] != semantics.shape[-2]:
        raise DimensionError(f"clip tokens {o_c.shape} cannot query channel semantics {semantics.shape}")
    return softmax_rows(matmul(o_c, semantics), axis=SOFTMAX_AXES[softmax_axis])


def query(o_c, bank, f_bar, params, softmax_axis="memory"):
    """F~ = CrossAttention(F_bar, concat_j A_j T_j) + F_bar.

    f_bar: (..., C, H, W) with C the bank's texture width. The bank is read only.
    """

    channels = bank.textures.shape[-1]
    if f_bar.shape[-3] != channels:
        raise DimensionError(f"features have {f_bar.shape[-3]} channels, bank textures have {channels}")

    mixed = matmul(channel_affinity(o_c, bank.semantics, softmax_axis), bank.textures)
    memory = rearrange(mixed, "j k c -> (j k) c")

    h, w = f_bar.shape[-2:]
    pixels = rearrange(f_bar, "... c h w -> ... (h w) c")
    out = rearrange(cross_attention(pixels, memory, params), "... (h w) c -> ... c h w", h=h, w=w)
    return out + f_bar


def pooled_tokens(feats, grid):
    """Rescale every feature map to grid x grid and flatten all of them into tokens."""

    tokens = [rearrange(resize_area(f, (grid, grid)), "... c h w -> (... h w) c") for f in feats]
    return np.concatenate(tokens, axis=0)


def build_or_update(bank, feats, group_weights, grid=8):
    """Return the bank refreshed by one clip's multiscale decoder features.

    Per group: T^ = C_bar T_bar; Z = CrossAttention(T^, pooled features);
    T = SelfAttention(Z); C = C_bar + Z W_j.
    """

    if len(feats) != FEATURE_SCALES:
        raise ValueError(f"bank update needs {FEATURE_SCALES} feature scales, got {len(feats)}")
    if len(group_weights) != bank.groups:
        raise DimensionError(f"{len(group_weights)} weight sets for {bank.groups} bank groups")

    tokens = pooled_tokens(feats, grid)
    semantics, textures = [], []
    for j, weights in enumerate(group_weights):
        c_bar, t_bar = bank.semantics[j], bank.textures[j]
        z = cross_attention(matmul(c_bar, t_bar), tokens, weights.cross)
        textures.append(self_attention(z, weights.refine))
        semantics.append(c_bar + matmul(z, weights.project))

    updated = MemoryBank(np.stack(semantics), np.stack(textures), updates=bank.updates + 1)
    logger.info("memory bank updated ({} groups, {} updates so far)", updated.groups, updated.updates)
    return updated
