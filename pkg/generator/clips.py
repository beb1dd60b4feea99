"""Synthetic moving-shapes clips and single-frame corpora.

Every scene is drawn on an 8-bit canvas, so frames survive a PNG round trip
exactly. Frames come out as (N, 3, H, W) floats in [0, 1], RGB.
"""

import numpy as np

from errors import DimensionError
from generator.helpers import draw_shape, random_shape, striped_background
from noise import KeyedNoise
from tensors import resize_area

NUM_SHAPES = 4


def _render(background, shapes, frame):
    canvas = background.copy()
    for shape in shapes:
        draw_shape(canvas, shape, frame)
    return np.transpose(canvas, (2, 0, 1)).astype(np.float64) / 255.0


def moving_shapes_clip(frames, size, seed=0):
    """Shapes translating over a striped gradient, `frames` x 3 x size x size."""

    if frames < 1 or size < 8:
        raise ValueError(f"need at least one frame of at least 8 px, got {frames} x {size}")

    rng = KeyedNoise(seed).generator("shapes")
    background = striped_background(rng, size)
    shapes = [random_shape(rng, size) for _ in range(NUM_SHAPES)]
    return np.stack([_render(background, shapes, t) for t in range(frames)])


def synthetic_corpus(n, size, seed=0):
    """n independent still scenes."""

    images = []
    for i in range(n):
        rng = KeyedNoise(seed).generator("corpus", i)
        background = striped_background(rng, size)
        shapes = [random_shape(rng, size) for _ in range(NUM_SHAPES)]
        images.append(_render(background, shapes, 0))
    return np.stack(images)


def downscale(clip, s):
    """Area-downsample every frame by an integer factor s."""

    h, w = clip.shape[-2:]
    if h % s or w % s:
        raise DimensionError(f"{h}x{w} frames are not divisible by {s}")
    return resize_area(clip, (h // s, w // s))
