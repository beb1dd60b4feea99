"""PSNR, SSIM, Charbonnier and power-spectrum comparisons."""

import math

import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from errors import DimensionError
from models import FrameMetrics, MetricReport
from spectral import luma

PSNR_CAP = 99.0
SSIM_WINDOW = 11
PSD_DELTA = 1e-10
PSD_BANDS = ("low", "high", "all")
REPORT_CSV_HEADERS = ["index", "psnr", "ssim", "charbonnier"]


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"cannot compare frames of shape {a.shape} and {b.shape}")
    return a, b


def psnr(a, b, mode="rgb"):
    """10 log10(1 / MSE) for values in [0, 1], capped at 99 dB."""

    a, b = _same_shape(a, b)
    if mode == "y":
        a, b = luma(a), luma(b)
    elif mode != "rgb":
        raise ValueError(f"psnr mode must be 'rgb' or 'y', got {mode!r}")

    mse = mean_squared_error(a, b)
    if mse == 0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def ssim(a, b):
    """Mean Gaussian-window SSIM (sigma 1.5, 11 x 11) over the luma channel."""

    a, b = _same_shape(a, b)
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise DimensionError(f"SSIM needs frames of at least {SSIM_WINDOW} x {SSIM_WINDOW}, got {a.shape[-2:]}")
    return float(structural_similarity(luma(a), luma(b), gaussian_weights=True, sigma=1.5,
                                       use_sample_covariance=False, data_range=1.0))


def charbonnier(a, b, eps=1e-3):
    """Mean of sqrt(d^2 + eps^2) over every element."""

    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    a, b = _same_shape(a, b)
    return float(np.mean(np.sqrt((a - b) ** 2 + eps ** 2)))


def band_slice(bins, band):
    """Bins of the low (bottom quartile), high (top quartile) or whole spectrum."""

    if band not in PSD_BANDS:
        raise ValueError(f"band must be one of {PSD_BANDS}, got {band!r}")
    quarter = max(bins // 4, 1)
    if band == "low":
        return slice(0, quarter)
    if band == "high":
        return slice(bins - quarter, bins)
    return slice(0, bins)


def psd_distance(a_profile, b_profile, band="low"):
    """Mean |log(a + delta) - log(b + delta)| over one frequency band."""

    if a_profile.bins != b_profile.bins:
        raise DimensionError(f"profiles have {a_profile.bins} and {b_profile.bins} bins")

    part = band_slice(a_profile.bins, band)
    diff = np.log(a_profile.power[part] + PSD_DELTA) - np.log(b_profile.power[part] + PSD_DELTA)
    return float(np.mean(np.abs(diff)))


def evaluate(sr, hr, mode="rgb", eps=1e-3):
    """Per-frame metrics for two (N, C, H, W) stacks."""

    sr, hr = _same_shape(sr, hr)
    rows = [FrameMetrics(index=i, psnr=psnr(s, h, mode), ssim=ssim(s, h), charbonnier=charbonnier(s, h, eps))
            for i, (s, h) in enumerate(zip(sr, hr))]
    return MetricReport(frames=rows)
