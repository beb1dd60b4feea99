"""Support functions for synthetic clip generation."""

import cv2
import numpy as np


def striped_background(rng, size):
    """Diagonal gradient overlaid with random sinusoidal stripes, uint8 (H, W, 3)."""

    y, x = np.mgrid[0:size, 0:size] / size
    low, high = rng.uniform(0.1, 0.4, 3), rng.uniform(0.5, 0.9, 3)
    ramp = (x + y)[..., None] / 2

    freq = rng.uniform(2.0, 6.0)
    angle = rng.uniform(0, np.pi)
    stripes = 0.1 * np.sin(2 * np.pi * freq * (x * np.cos(angle) + y * np.sin(angle)))

    image = low + (high - low) * ramp + stripes[..., None]
    return np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def random_shape(rng, size):
    """One shape spec: kind, start centre, velocity (px/frame), extent, colour."""

    return dict(
        kind=rng.choice(["disk", "rect"]),
        centre=rng.uniform(0.2, 0.8, 2) * size,
        velocity=rng.uniform(-0.03, 0.03, 2) * size,
        extent=int(rng.uniform(0.06, 0.16) * size) + 1,
        colour=tuple(int(c) for c in rng.integers(0, 256, 3)),
    )


def draw_shape(canvas, shape, frame):
    cx, cy = (shape["centre"] + frame * shape["velocity"]).astype(int)
    r = shape["extent"]
    if shape["kind"] == "disk":
        cv2.circle(canvas, (int(cx), int(cy)), r, shape["colour"], thickness=-1, lineType=cv2.LINE_AA)
    else:
        cv2.rectangle(canvas, (int(cx - r), int(cy - r)), (int(cx + r), int(cy + r)), shape["colour"],
                      thickness=-1, lineType=cv2.LINE_AA)
    return canvas
