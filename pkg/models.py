"""Data models for SeeClear.

Arrays are numpy float64 unless noted. Frames use (channel, row, col) layout
and clips add a leading frame axis.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from errors import DimensionError


##############################################################################
# Attention


@dataclass(frozen=True, eq=False)
class AttentionParams:
    """Linear projections for one (multi-head) attention block."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    d: int
    heads: int = 1

    def __post_init__(self):
        if self.d <= 0 or self.heads <= 0:
            raise DimensionError(f"head dim and head count must be positive, got d={self.d} heads={self.heads}")

        width = self.d * self.heads
        for name in ("w_q", "w_k", "w_v"):
            w = getattr(self, name)
            if w.ndim != 2 or w.shape[1] != width:
                raise DimensionError(f"{name} has shape {w.shape}, expected (*, {width})")

    @property
    def width(self):
        return self.d * self.heads

    @classmethod
    def identity(cls, dim, heads=1):
        """Projections that pass features through unchanged."""

        eye = np.eye(dim)
        return cls(eye, eye.copy(), eye.copy(), d=dim // heads, heads=heads)


##############################################################################
# Spectral representations


@dataclass(frozen=True, eq=False)
class PatchSpectrum:
    """Per-patch DCT coefficients tiled in place of the patches they describe.

    `coefficients` has the (padded) frame layout: the p x p block at block
    position (i, j) holds the DCT-II coefficients of the matching patch.
    `shape` is the spatial size before reflect padding.
    """

    coefficients: np.ndarray
    patch_size: int
    shape: tuple


@dataclass(frozen=True, eq=False)
class BlurOperator:
    """Diagonal heat-dissipation operator for one patch size."""

    lambda_diag: np.ndarray
    tau: float = 0.0

    def factor(self):
        return np.exp(self.lambda_diag * self.tau)


@dataclass(frozen=True, eq=False)
class WaveletPyramid:
    """Haar pyramid: coarsest LL plus (LH, HL, HH) per level, finest first."""

    lowpass: np.ndarray
    details: list

    @property
    def levels(self):
        return len(self.details)


@dataclass(frozen=True, eq=False)
class PSDProfile:
    """Radially averaged power spectrum; bin i covers radii [i, i+1)."""

    power: np.ndarray

    @property
    def bins(self):
        return len(self.power)


##############################################################################
# Diffusion


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """Residual-shift and dissipation schedule, indexed 0..T.

    alpha[0] is unused and kept at zero so alpha[t] lines up with eta[t].
    """

    steps: int
    eta: np.ndarray
    alpha: np.ndarray
    kappa: float
    tau: np.ndarray
    sigma2_b: float
    patch_size: int = 8
    variance_mode: str = "consistent"

    def __repr__(self):
        return (f"<DiffusionSchedule T={self.steps} kappa={self.kappa} "
                f"sigma2_B={self.sigma2_b} p={self.patch_size} mode={self.variance_mode}>")


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Chain state u_t in the patch-DCT domain."""

    u: np.ndarray
    t: int


@dataclass(frozen=True, eq=False)
class PosteriorParams:
    mu: np.ndarray
    sigma2: np.ndarray


# (u_t, t, conditioning) -> estimate of u_0, same shape as u_t
DenoiserContract = Callable[[np.ndarray, int, object], np.ndarray]


##############################################################################
# Semantics


@dataclass(frozen=True)
class Vocabulary:
    """Class names the semantic distiller scores image tokens against."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("vocabulary must not be empty")
        if len(set(entries)) != len(entries):
            raise ValueError("vocabulary entries must be unique")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def parse(cls, text):
        return cls(tuple(word.strip() for word in text.split(",") if word.strip()))


@dataclass(frozen=True, eq=False)
class SemanticSet:
    """Per-frame tokens O_i, segmentation features P_i and clip-level tokens.

    o_tokens: (m, k, d); seg_features: (m, d_p, h, w); init_tokens: (k, d);
    clip_tokens: (k, d) once the instance encoder-decoder has run.
    """

    o_tokens: np.ndarray
    seg_features: np.ndarray
    init_tokens: np.ndarray
    clip_tokens: Optional[np.ndarray] = None

    @property
    def frames(self):
        return self.o_tokens.shape[0]


@dataclass(frozen=True, eq=False)
class ModulationPair:
    gamma: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True, eq=False)
class MemoryBank:
    """CaTeGory groups: semantics (J, d, d) paired with textures (J, d, C)."""

    semantics: np.ndarray
    textures: np.ndarray
    updates: int = 0

    def __post_init__(self):
        if self.semantics.ndim != 3 or self.textures.ndim != 3:
            raise DimensionError("bank semantics and textures must be (J, rows, cols)")
        if self.semantics.shape[0] != self.textures.shape[0] or self.semantics.shape[0] < 1:
            raise DimensionError(f"group counts differ: {self.semantics.shape} vs {self.textures.shape}")
        if self.semantics.shape[2] != self.textures.shape[1]:
            raise DimensionError(f"C_j x T_j is undefined for {self.semantics.shape} x {self.textures.shape}")

    @property
    def groups(self):
        return self.semantics.shape[0]

    @classmethod
    def zeros(cls, groups, dim, channels):
        """Zero-initialized bank, the state before any clip is seen."""

        return cls(np.zeros((groups, dim, dim)), np.zeros((groups, dim, channels)))


##############################################################################
# Pixel condenser


@dataclass(frozen=True)
class CondenserConfig:
    base_channels: int = 16
    encoder_depth: int = 4
    middle_blocks: int = 3
    decoder_depth: int = 4
    window: int = 4
    clip_length: int = 5
    upscale: int = 4
    dwt_levels: int = 2
    token_dim: int = 32
    top_k: int = 8
    seg_channels: int = 16
    seg_stride: int = 8
    heads: int = 1
    groups: int = 4
    bank_grid: int = 8
    gate_mode: str = "max"
    softmax_axis: str = "memory"
    image_channels: int = 3

    def violations(self):
        """Every way this config breaks the U-Net's structural contract."""

        found = []
        if (self.encoder_depth, self.middle_blocks, self.decoder_depth) != (4, 3, 4):
            found.append("encoder/middle/decoder depths must be 4/3/4")
        if self.upscale != 2 ** self.dwt_levels:
            found.append(f"upscale {self.upscale} must equal 2**dwt_levels ({2 ** self.dwt_levels})")
        if self.base_channels % self.heads or self.token_dim % self.heads:
            found.append("base_channels and token_dim must be divisible by heads")
        if self.gate_mode not in ("max", "mean"):
            found.append(f"unknown gate_mode {self.gate_mode!r}")
        if self.softmax_axis not in ("memory", "token"):
            found.append(f"unknown softmax_axis {self.softmax_axis!r}")
        for name in ("base_channels", "window", "clip_length", "token_dim", "top_k",
                     "seg_channels", "seg_stride", "groups", "bank_grid"):
            if getattr(self, name) < 1:
                found.append(f"{name} must be positive")
        return found


@dataclass
class SkipStack:
    """High-frequency band sets from the encoder, consumed last-in first-out."""

    bands: list = field(default_factory=list)

    def push(self, highs):
        self.bands.append(highs)

    def pop(self):
        if not self.bands:
            raise DimensionError("skip stack underflow: decoder asked for more levels than the encoder produced")
        return self.bands.pop()

    def __len__(self):
        return len(self.bands)


##############################################################################
# Metrics


@dataclass(frozen=True)
class FrameMetrics:
    index: int
    psnr: float
    ssim: float
    charbonnier: float


@dataclass(frozen=True, eq=False)
class MetricReport:
    frames: list

    @property
    def psnr(self):
        return float(np.mean([f.psnr for f in self.frames]))

    @property
    def ssim(self):
        return float(np.mean([f.ssim for f in self.frames]))

    @property
    def charbonnier(self):
        return float(np.mean([f.charbonnier for f in self.frames]))
