"""Keyed, counter-based random streams.

Every draw is addressed by (seed, *key). A stream is a Philox generator whose
key comes from a SeedSequence over those integers, so the numbers a frame
or a weight receives never depend on what was drawn before it or on which
thread drew it.
"""

import zlib

import numpy as np


def key_part(part):
    """Turn a key component (int or label) into a non-negative int."""

    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"key components must be non-negative, got {part}")
    return part


class KeyedNoise:
    """Random numbers addressed by a global seed plus a key path."""

    def __init__(self, seed):
        self.seed = key_part(seed)

    def __repr__(self):
        return f"<KeyedNoise seed={self.seed}>"

    def generator(self, *key):
        """Fresh generator for one key path."""

        entropy = [self.seed] + [key_part(k) for k in key]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def normal(self, shape, *key, frames=None):
        """Standard normal draws.

        With `frames`, axis 0 of `shape` indexes frames and each frame slice
        comes from its own stream keyed by the global frame index.
        """

        shape = tuple(shape)
        if frames is None:
            return self.generator(*key).standard_normal(shape)

        frames = list(frames)
        if len(frames) != shape[0]:
            raise ValueError(f"{len(frames)} frame keys for leading axis {shape[0]}")
        out = np.empty(shape)
        for i, frame in enumerate(frames):
            out[i] = self.generator(*key, frame).standard_normal(shape[1:])
        return out

    def uniform(self, shape, low, high, *key):
        return self.generator(*key).uniform(low, high, size=tuple(shape))
