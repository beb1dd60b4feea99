"""Patch DCT, heat-dissipation blur, Haar wavelets and power spectra."""

import math
from functools import lru_cache

import numpy as np
from einops import rearrange
from scipy import fft

from errors import DimensionError
from models import BlurOperator, PatchSpectrum, PSDProfile, WaveletPyramid

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


##############################################################################
# Patch DCT


def dct_matrix(p):
    """Orthonormal DCT-II basis V with coefficients = V @ patch @ V.T."""

    x = np.arange(p)
    u = np.arange(p)[:, None]
    v = np.cos(math.pi * (x + 0.5) * u / p) * math.sqrt(2.0 / p)
    v[0] /= math.sqrt(2.0)
    return v


def _pad_to_patches(frame, p):
    h, w = frame.shape[-2:]
    pad_h, pad_w = (-h) % p, (-w) % p
    if not (pad_h or pad_w):
        return frame
    pad = [(0, 0)] * (frame.ndim - 2) + [(0, pad_h), (0, pad_w)]
    return np.pad(frame, pad, mode="reflect")


def dct2_patches(frame, p):
    """Orthonormal 2D DCT-II of every non-overlapping p x p patch.

    Works on any leading axes; H and W are reflect-padded up to multiples of p
    and the padding is cropped again by idct2_patches.
    """

    if p <= 0:
        raise ValueError(f"patch size must be positive, got {p}")

    frame = np.asarray(frame, dtype=float)
    shape = frame.shape[-2:]
    blocks = rearrange(_pad_to_patches(frame, p), "... (h p1) (w p2) -> ... h w p1 p2", p1=p, p2=p)
    coeffs = fft.dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    coeffs = rearrange(coeffs, "... h w p1 p2 -> ... (h p1) (w p2)")
    return PatchSpectrum(coefficients=coeffs, patch_size=p, shape=tuple(shape))


def idct2_patches(spec):
    p = spec.patch_size
    blocks = rearrange(spec.coefficients, "... (h p1) (w p2) -> ... h w p1 p2", p1=p, p2=p)
    pixels = fft.idctn(blocks, type=2, norm="ortho", axes=(-2, -1))
    pixels = rearrange(pixels, "... h w p1 p2 -> ... (h p1) (w p2)")
    h, w = spec.shape
    return pixels[..., :h, :w]


##############################################################################
# Heat dissipation


def blur_lambda(p):
    """Lambda_{x*p+y} = -pi^2 (x^2/p^2 + y^2/p^2) laid out as a p x p grid."""

    freq = np.arange(p) ** 2 / p ** 2
    return -math.pi ** 2 * (freq[:, None] + freq[None, :])


@lru_cache(maxsize=64)
def lambda_grid(p, height, width):
    """blur_lambda tiled over a padded frame of the given size."""

    if height % p or width % p:
        raise DimensionError(f"{height}x{width} is not tiled by {p}x{p} patches")
    grid = np.tile(blur_lambda(p), (height // p, width // p))
    grid.setflags(write=False)
    return grid


def blur_operator(p, tau):
    return BlurOperator(lambda_diag=blur_lambda(p), tau=tau)


def blur_apply(spec, tau):
    """Multiply every patch's coefficients by e^{Lambda tau}; DC is untouched."""

    if tau < 0:
        raise ValueError(f"dissipation time must be non-negative, got {tau}")

    height, width = spec.coefficients.shape[-2:]
    factor = np.exp(lambda_grid(spec.patch_size, height, width) * tau)
    return PatchSpectrum(coefficients=spec.coefficients * factor, patch_size=spec.patch_size, shape=spec.shape)


def global_blur(frame, tau):
    """Whole-frame heat dissipation (one DCT over the full frame)."""

    if tau < 0:
        raise ValueError(f"dissipation time must be non-negative, got {tau}")

    frame = np.asarray(frame, dtype=float)
    height, width = frame.shape[-2:]
    fy = np.arange(height) ** 2 / height ** 2
    fx = np.arange(width) ** 2 / width ** 2
    decay = np.exp(-math.pi ** 2 * (fy[:, None] + fx[None, :]) * tau)
    coeffs = fft.dctn(frame, type=2, norm="ortho", axes=(-2, -1))
    return fft.idctn(coeffs * decay, type=2, norm="ortho", axes=(-2, -1))


##############################################################################
# Haar wavelets


def haar_down(x):
    """One orthonormal Haar analysis step: LL and the (LH, HL, HH) details."""

    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"Haar analysis needs even dims, got {h}x{w}")

    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2
    lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2
    hh = (a - b - c + d) / 2
    return ll, (lh, hl, hh)


def haar_up(ll, details):
    lh, hl, hh = details
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise DimensionError(f"sub-band shapes differ: {ll.shape}, {lh.shape}, {hl.shape}, {hh.shape}")

    out = np.empty(ll.shape[:-2] + (2 * ll.shape[-2], 2 * ll.shape[-1]))
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2
    out[..., 0::2, 1::2] = (ll + lh - hl - hh) / 2
    out[..., 1::2, 0::2] = (ll - lh + hl - hh) / 2
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2
    return out


def dwt2(frame, k):
    """k-level Haar pyramid, recursing on LL."""

    frame = np.asarray(frame, dtype=float)
    h, w = frame.shape[-2:]
    if k < 1 or h % 2 ** k or w % 2 ** k:
        raise DimensionError(f"{h}x{w} is not divisible by 2**{k}")

    details = []
    ll = frame
    for _ in range(k):
        ll, highs = haar_down(ll)
        details.append(highs)
    return WaveletPyramid(lowpass=ll, details=details)


def idwt2(pyr):
    ll = pyr.lowpass
    for highs in reversed(pyr.details):
        ll = haar_up(ll, highs)
    return ll


def dwt2_packet(frame, k):
    """Full k-level Haar packet: (..., C, H, W) -> (..., C * 4**k, H/2**k, W/2**k).

    Every sub-band is split again, so all bands share one grid. Bands of a
    channel are contiguous, ordered LL, LH, HL, HH at each level.
    """

    x = np.asarray(frame, dtype=float)
    h, w = x.shape[-2:]
    if k < 0 or h % 2 ** k or w % 2 ** k:
        raise DimensionError(f"{h}x{w} is not divisible by 2**{k}")

    for _ in range(k):
        ll, (lh, hl, hh) = haar_down(x)
        x = rearrange(np.stack([ll, lh, hl, hh], axis=-3), "... c b h w -> ... (c b) h w")
    return x


def idwt2_packet(bands, k):
    x = np.asarray(bands, dtype=float)
    for _ in range(k):
        if x.shape[-3] % 4:
            raise DimensionError(f"{x.shape[-3]} bands cannot be regrouped into Haar quadruples")
        x = rearrange(x, "... (c b) h w -> ... c b h w", b=4)
        x = haar_up(x[..., 0, :, :], (x[..., 1, :, :], x[..., 2, :, :], x[..., 3, :, :]))
    return x


##############################################################################
# Power spectra


def luma(frame):
    """BT.601 luma of a (3, H, W) frame; single-channel frames pass through."""

    frame = np.asarray(frame, dtype=float)
    if frame.ndim == 2:
        return frame
    if frame.shape[-3] == 1:
        return frame[..., 0, :, :]
    if frame.shape[-3] != 3:
        raise DimensionError(f"expected 1 or 3 channels, got {frame.shape[-3]}")
    return np.tensordot(LUMA_WEIGHTS, frame, axes=([0], [-3]))


def psd_radial(frame):
    """|FFT|^2 / (H W) averaged over integer-radius annuli.

    Radii are measured in cycles per frame; bin i holds radii in [i, i+1)
    and there are floor(min(H, W) / 2) bins.
    """

    y = luma(frame)
    height, width = y.shape
    power = np.abs(fft.fft2(y)) ** 2 / (height * width)

    ky = fft.fftfreq(height) * height
    kx = fft.fftfreq(width) * width
    radius = np.floor(np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)).astype(int)

    bins = min(height, width) // 2
    inside = radius < bins
    totals = np.bincount(radius[inside], weights=power[inside], minlength=bins)
    counts = np.bincount(radius[inside], minlength=bins)
    return PSDProfile(power=totals / np.maximum(counts, 1))
