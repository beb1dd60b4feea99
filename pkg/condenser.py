"""Toy-scale pixel condenser (attention U-Net) and the clip generation loop.

The network reads the noisy state as a Haar wavelet packet at LR
resolution, runs four encoder levels (wavelet downsampling, LR injection),
three semantically conditioned middle blocks and four decoder levels
(wavelet upsampling from the skip stack, InCAM, CaTeGory), and predicts a
residual over the bicubically upsampled LR clip. The diffusion chain
itself runs on patch-DCT coefficients (see diffusion.py); pixels are the
meeting point between the two representations.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from einops import rearrange
from loguru import logger

from category import GroupWeights, build_or_update, query
from diffusion import reverse_sample
from errors import ConfigError, DimensionError, InvariantViolation
from incam import align, clip_tokens, embed_semantics, modulate, modulation_pairs
from models import AttentionParams, MemoryBank, PatchSpectrum, SkipStack, SpectralState, Vocabulary
from noise import KeyedNoise
from semantics import DEFAULT_VOCABULARY, semantic_set
from spectral import dct2_patches, dwt2_packet, haar_down, haar_up, idct2_patches, idwt2_packet
from tensors import (channel_self_attention, conv2d, matmul, relu, resize_bicubic, sinusoidal_embedding,
                     window_partition, window_reverse, window_self_attention)

ENCODER_DEPTH = 4
MIDDLE_BLOCKS = 3
DECODER_DEPTH = 4

# pixel range an estimate is clamped to before it re-enters the chain; wide
# enough that bicubic overshoot of [0, 1] frames passes untouched
ESTIMATE_RANGE = (-1.0, 2.0)


##############################################################################
# Weights


def weight_shapes(cfg):
    """Name -> shape for every parameter of the network."""

    c, d, dp = cfg.base_channels, cfg.token_dim, cfg.seg_channels
    bands = 4 ** cfg.dwt_levels * cfg.image_channels
    shapes = {}

    def conv(name, c_out, c_in, size=3):
        shapes[name] = (c_out, c_in, size, size)
        shapes[f"{name}.bias"] = (c_out,)

    def attention(name, d_in, width, d_kv=None):
        shapes[f"{name}.q"] = (d_in, width)
        shapes[f"{name}.k"] = (d_kv or d_in, width)
        shapes[f"{name}.v"] = (d_kv or d_in, width)

    def resblock(name):
        conv(f"{name}.a", c, c)
        conv(f"{name}.b", c, c)
        shapes[f"{name}.time"] = (c, c)

    def conditioned(prefix):
        conv(f"{prefix}.mod.a", c, dp)
        conv(f"{prefix}.mod.b", 2 * c, c)
        attention(f"{prefix}.ca", c, c, d_kv=d)
        shapes[f"{prefix}.proj"] = (d, c)
        attention(f"{prefix}.mfsa", c, c)
        resblock(f"{prefix}.res")

    for i in range(1, ENCODER_DEPTH + 1):
        conv(f"enc{i}.in", c, (bands if i == 1 else c) + cfg.image_channels)
        resblock(f"enc{i}.res1")
        attention(f"enc{i}.wsa", c, c)
        attention(f"enc{i}.csa", c, c)
        resblock(f"enc{i}.res2")

    for j in range(1, MIDDLE_BLOCKS + 1):
        conditioned(f"mid{j}")

    for k in range(1, DECODER_DEPTH + 1):
        conditioned(f"dec{k}")
        attention(f"dec{k}.cat", c, c)
    conv("out", bands, c)

    attention("sem.enc", d, d)
    attention("sem.dec", d, d)

    for j in range(1, cfg.groups + 1):
        attention(f"bank{j}.cross", c, c)
        attention(f"bank{j}.refine", c, c)
        shapes[f"bank{j}.project"] = (c, d)
    return shapes


def init_weights(cfg, seed):
    """Seeded weights, uniform in +-1/sqrt(fan_in); biases start at zero."""

    noise = KeyedNoise(seed)
    weights = {}
    for name, shape in weight_shapes(cfg).items():
        if name.endswith(".bias"):
            weights[name] = np.zeros(shape)
            continue
        fan_in = math.prod(shape[1:]) if len(shape) == 4 else shape[0]
        bound = 1.0 / math.sqrt(fan_in)
        weights[name] = noise.uniform(shape, -bound, bound, "weights", name)
    return weights


def zero_weights(cfg):
    return {name: np.zeros(shape) for name, shape in weight_shapes(cfg).items()}


def map_frames(fn, items, workers=1):
    """Apply a per-frame stage; threads only change who runs each frame."""

    items = list(items)
    if workers <= 1 or len(items) == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def check_weights(weights, cfg):
    expected = weight_shapes(cfg)
    missing = sorted(set(expected) - set(weights))
    extra = sorted(set(weights) - set(expected))
    if missing or extra:
        raise DimensionError(f"weights do not fit the config: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, shape in expected.items():
        if tuple(weights[name].shape) != shape:
            raise DimensionError(f"weight {name} has shape {weights[name].shape}, expected {shape}")


##############################################################################
# Network


class PixelCondenser:
    """Attention U-Net over wavelet-packet bands, conditioned on semantics."""

    def __init__(self, cfg, weights, workers=1):
        problems = cfg.violations()
        if problems:
            raise ConfigError("; ".join(problems))
        check_weights(weights, cfg)

        self.cfg = cfg
        self.weights = weights
        self.workers = max(int(workers), 1)

    def __repr__(self):
        return f"<PixelCondenser C={self.cfg.base_channels} d={self.cfg.token_dim} workers={self.workers}>"

    def _map(self, fn, items):
        return map_frames(fn, items, self.workers)

    def _attention(self, name):
        w = self.weights
        width = w[f"{name}.q"].shape[1]
        heads = self.cfg.heads
        return AttentionParams(w[f"{name}.q"], w[f"{name}.k"], w[f"{name}.v"], d=width // heads, heads=heads)

    def _conv(self, x, name):
        return conv2d(x, self.weights[name], self.weights[f"{name}.bias"])

    def _resblock(self, x, emb, name):
        r = self._conv(relu(self._conv(x, f"{name}.a")), f"{name}.b")
        scale = 1.0 + matmul(emb, self.weights[f"{name}.time"])
        return x + r * scale[:, None, None]

    def _window(self, feat):
        return min(self.cfg.window, *feat.shape[-2:])

    def _modulation(self, seg, prefix, size):
        w = self.weights
        return modulation_pairs(seg, w[f"{prefix}.mod.a"], w[f"{prefix}.mod.a.bias"],
                                w[f"{prefix}.mod.b"], w[f"{prefix}.mod.b.bias"], size)

    def _align(self, feat, o_c, prefix):
        """Clip-token gated MFSA, windowed in space and joint across frames."""

        window = self._window(feat)
        height, width = feat.shape[-2:]
        windows = rearrange(window_partition(feat, window), "m nh nw n c -> nh nw m n c")
        tokens = matmul(o_c, self.weights[f"{prefix}.proj"])
        out = align(tokens, windows, self._attention(f"{prefix}.mfsa"), self.cfg.gate_mode)
        return window_reverse(rearrange(out, "nh nw m n c -> m nh nw n c"), window, height, width)

    def _conditioned(self, feat, tokens, o_c, seg, prefix, emb):
        feat = modulate(feat, self._modulation(seg, prefix, feat.shape[-2:]))
        feat = feat + embed_semantics(feat, tokens, self._attention(f"{prefix}.ca"))
        feat = feat + self._align(feat, o_c, prefix)
        return self._resblock(feat, emb, f"{prefix}.res")

    def semantics(self, lr_clip, vocab, seed):
        """Distill a clip once and fuse its tokens into clip tokens O_c."""

        cfg = self.cfg
        sem = semantic_set(lr_clip, vocab, seed, cfg.top_k, cfg.token_dim, cfg.seg_channels, cfg.seg_stride)
        return self.fuse(sem, len(lr_clip))

    def fuse(self, sem, frames):
        """Check externally supplied semantics against the network and add clip tokens."""

        cfg = self.cfg
        if sem.frames != frames:
            raise DimensionError(f"semantics cover {sem.frames} frames, the clip has {frames}")
        if sem.o_tokens.shape[-1] != cfg.token_dim or sem.init_tokens.shape[-1] != cfg.token_dim:
            raise DimensionError(f"tokens of width {sem.o_tokens.shape[-1]}, the network expects {cfg.token_dim}")
        if sem.seg_features.ndim != 4 or sem.seg_features.shape[1] != cfg.seg_channels:
            raise DimensionError(f"segmentation features {sem.seg_features.shape} need {cfg.seg_channels} channels")

        o_c = clip_tokens(sem.o_tokens, sem.init_tokens,
                          self._attention("sem.enc"), self._attention("sem.dec"))
        return replace(sem, clip_tokens=o_c)

    def encode(self, lr, bands, t):
        """Four encoder levels for one frame (or a batch of frames).

        lr: (..., 3, h, w); bands: (..., 4**k * 3, h, w). Returns the
        deepest features (h / 8) and the three high-band sets.
        """

        if lr.shape[-2:] != bands.shape[-2:]:
            raise DimensionError(f"LR {lr.shape} and wavelet bands {bands.shape} are on different grids")

        emb = sinusoidal_embedding(t, self.cfg.base_channels)
        skips = SkipStack()
        x = np.concatenate([bands, lr], axis=-3)
        for i in range(1, ENCODER_DEPTH + 1):
            h = self._conv(x, f"enc{i}.in")
            h = self._resblock(h, emb, f"enc{i}.res1")
            h = h + window_self_attention(h, self._window(h), self._attention(f"enc{i}.wsa"))
            h = h + channel_self_attention(h, self._attention(f"enc{i}.csa"))
            h = self._resblock(h, emb, f"enc{i}.res2")
            if i == ENCODER_DEPTH:
                break

            ll, highs = haar_down(h)
            skips.push(highs)
            lr, _ = haar_down(lr)
            x = np.concatenate([ll, lr], axis=-3)
        return h, skips

    def middle(self, features, semantics, t):
        """Three InCAM blocks: per-frame tokens O_i, clip tokens O_c for the gate."""

        emb = sinusoidal_embedding(t, self.cfg.base_channels)
        for j in range(1, MIDDLE_BLOCKS + 1):
            features = self._conditioned(features, semantics.o_tokens, semantics.clip_tokens,
                                         semantics.seg_features, f"mid{j}", emb)
        return features

    def decode(self, features, skips, semantics, bank, t):
        """Four decoder levels; returns residual pixels and the per-level features."""

        emb = sinusoidal_embedding(t, self.cfg.base_channels)
        o_c = semantics.clip_tokens
        collected = []
        h = features
        for k in range(1, DECODER_DEPTH + 1):
            if k < DECODER_DEPTH:
                h = haar_up(h, skips.pop())
            h = self._conditioned(h, o_c, o_c, semantics.seg_features, f"dec{k}", emb)
            h = query(o_c, bank, h, self._attention(f"dec{k}.cat"), self.cfg.softmax_axis)
            collected.append(h)

        residual = idwt2_packet(self._conv(h, "out"), self.cfg.dwt_levels)
        return residual, collected

    def predict(self, noisy, lr, upsampled, t, semantics, bank):
        """Estimate the clean HR clip from the noisy pixel state at step t."""

        levels = self.cfg.dwt_levels
        bands = self._map(lambda frame: dwt2_packet(frame, levels), noisy)
        encoded = self._map(lambda pair: self.encode(pair[0], pair[1], t), zip(lr, bands))

        features = np.stack([h for h, _ in encoded])
        skips = stack_skips([s for _, s in encoded])
        features = self.middle(features, semantics, t)
        residual, collected = self.decode(features, skips, semantics, bank, t)
        return upsampled + residual, collected

    def group_weights(self):
        return [GroupWeights(self._attention(f"bank{j}.cross"), self._attention(f"bank{j}.refine"),
                             self.weights[f"bank{j}.project"])
                for j in range(1, self.cfg.groups + 1)]


def stack_skips(stacks):
    """Merge per-frame skip stacks into one stack of frame-batched bands."""

    merged = SkipStack()
    for level in range(len(stacks[0])):
        merged.push(tuple(np.stack([s.bands[level][b] for s in stacks]) for b in range(3)))
    return merged


##############################################################################
# Generation


def packet_oracle(hr_clip, levels):
    """Predictor that answers every step with the true HR clip.

    Both the noisy input and the answer go through the wavelet packet the
    network reads and writes, so the oracle exercises the same plumbing.
    """

    hr_clip = np.asarray(hr_clip, dtype=float)
    hr_bands = np.stack([dwt2_packet(frame, levels) for frame in hr_clip])

    def predict(noisy, t, conditioning):
        bands = np.stack([dwt2_packet(frame, levels) for frame in noisy])
        if bands.shape != hr_bands.shape:
            raise DimensionError(f"noisy bands {bands.shape} do not match oracle bands {hr_bands.shape}")
        return np.stack([idwt2_packet(b, levels) for b in hr_bands]), None

    return predict


def _check_finite(array, what):
    if not np.all(np.isfinite(array)):
        raise InvariantViolation(f"{what} is not finite")


def generate_clip(lr_clip, sched, cfg, bank=None, seed=0, weights=None, denoiser=None, oracle_hr=None,
                  semantics=None, vocab=None, frames=None, workers=1, progress=False):
    """Super-resolve one clip; returns (sr_clip, bank).

    `denoiser` runs the chain on an injected coefficient-domain estimate and
    `oracle_hr` on the true HR frames fed through the pixel loop; both
    bypass the network and return the bank untouched. Otherwise the network
    denoises every step and the bank is refreshed once, from the final
    step's decoder features. `semantics` replaces the built-in distiller.
    """

    lr = np.asarray(lr_clip, dtype=float)
    if lr.ndim != 4 or lr.shape[0] < 1:
        raise DimensionError(f"expected an (m, C, h, w) clip, got {lr.shape}")

    m, channels, h, w = lr.shape
    if channels != cfg.image_channels:
        raise DimensionError(f"expected {cfg.image_channels} channels, got {channels}")
    factor = 2 ** (ENCODER_DEPTH - 1)
    if h % factor or w % factor:
        raise DimensionError(f"LR frames of {h}x{w} are not divisible by {factor}")

    frames = list(range(m)) if frames is None else list(frames)
    size = (h * cfg.upscale, w * cfg.upscale)
    p = sched.patch_size
    noise = KeyedNoise(seed)

    def to_pixels(coefficients):
        return idct2_patches(PatchSpectrum(coefficients, p, size))

    upsampled = resize_bicubic(lr, size)
    ul = SpectralState(u=dct2_patches(upsampled, p).coefficients, t=sched.steps)

    if denoiser is not None:
        final = reverse_sample(ul, denoiser, sched, noise, frames=frames, progress=progress)
        sr = np.stack(map_frames(to_pixels, final.u, workers))
        _check_finite(sr, "super-resolved clip")
        return sr, bank

    net = None
    if oracle_hr is not None:
        oracle_hr = np.asarray(oracle_hr, dtype=float)
        if oracle_hr.shape != (m, channels) + size:
            raise DimensionError(f"oracle HR frames {oracle_hr.shape} do not match {(m, channels) + size}")
        predict = packet_oracle(oracle_hr, cfg.dwt_levels)
    else:
        net = PixelCondenser(cfg, init_weights(cfg, seed) if weights is None else weights, workers)
        if bank is None:
            bank = MemoryBank.zeros(cfg.groups, cfg.token_dim, cfg.base_channels)
        if semantics is None:
            vocab = Vocabulary.parse(DEFAULT_VOCABULARY) if vocab is None else vocab
            semantics = net.semantics(lr, vocab, seed)
        else:
            semantics = net.fuse(semantics, m)

        def predict(noisy, t, conditioning):
            return net.predict(noisy, lr, upsampled, t, conditioning, bank)

    last = {}

    def denoise(u_t, t, conditioning):
        noisy = np.stack(map_frames(to_pixels, u_t, workers))
        estimate, collected = predict(noisy, t, conditioning)
        _check_finite(estimate, f"estimate at step {t}")
        estimate = np.clip(estimate, *ESTIMATE_RANGE)
        last["features"] = collected
        return np.stack(map_frames(lambda x: dct2_patches(x, p).coefficients, estimate, workers))

    final = reverse_sample(ul, denoise, sched, noise, conditioning=semantics, frames=frames, progress=progress)
    sr = np.stack(map_frames(to_pixels, final.u, workers))
    _check_finite(sr, "super-resolved clip")

    if net is not None:
        bank = build_or_update(bank, last["features"], net.group_weights(), cfg.bank_grid)
    return sr, bank


def generate_video(lr_frames, sched, cfg, seed=0, weights=None, bank=None, vocab=None, oracle_hr=None,
                   semantics=None, workers=1, progress=False):
    """Split a frame sequence into clips of cfg.clip_length and thread the bank through them."""

    lr = np.asarray(lr_frames, dtype=float)
    if lr.ndim != 4 or lr.shape[0] < 1:
        raise DimensionError(f"expected (N, C, h, w) frames, got {lr.shape}")

    total = lr.shape[0]
    if weights is None and oracle_hr is None:
        weights = init_weights(cfg, seed)
    if oracle_hr is not None:
        oracle_hr = np.asarray(oracle_hr, dtype=float)
        expected = (total, lr.shape[1], lr.shape[2] * cfg.upscale, lr.shape[3] * cfg.upscale)
        if oracle_hr.shape != expected:
            raise DimensionError(f"oracle HR frames {oracle_hr.shape} do not match {expected}")
    if semantics is not None and semantics.frames != total:
        raise DimensionError(f"semantics cover {semantics.frames} frames, the video has {total}")

    clips = []
    for start in range(0, total, cfg.clip_length):
        index = list(range(start, min(start + cfg.clip_length, total)))
        clip_semantics = None
        if semantics is not None:
            clip_semantics = replace(semantics, o_tokens=semantics.o_tokens[index],
                                     seg_features=semantics.seg_features[index], clip_tokens=None)

        sr, bank = generate_clip(lr[index], sched, cfg, bank=bank, seed=seed, weights=weights,
                                 oracle_hr=None if oracle_hr is None else oracle_hr[index],
                                 semantics=clip_semantics, vocab=vocab, frames=index, workers=workers,
                                 progress=progress)
        clips.append(sr)
        logger.info("frames {}-{} of {} generated", index[0], index[-1], total)
    return np.concatenate(clips), bank
