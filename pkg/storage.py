"""Tensor files, PNG frame folders, weights, the memory bank and CSV reports.

Tensor file layout (little endian):

    b"SEET" | u8 version (1) | u8 dtype (0 = f32, 1 = f64) | u8 ndim | u8 pad
    | ndim x u32 dims | row-major payload
"""

import csv
import os
import struct

import cv2
import numpy as np
from loguru import logger

from errors import DataError
from models import MemoryBank

MAGIC = b"SEET"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {"f32": 0, "f64": 1}
TENSOR_SUFFIX = ".seet"
FRAME_SUFFIX = ".png"


##############################################################################
# Tensor files


def encode_tensor(array, dtype="f64"):
    if dtype not in DTYPE_CODES:
        raise ValueError(f"dtype must be one of {tuple(DTYPE_CODES)}, got {dtype!r}")

    array = np.asarray(array)
    code = DTYPE_CODES[dtype]
    if array.ndim > 255:
        raise DataError(f"cannot store {array.ndim} dimensions")

    header = MAGIC + struct.pack("<BBBB", VERSION, code, array.ndim, 0)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes()


def decode_tensor(blob, source="<bytes>"):
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise DataError(f"{source} is not a tensor file")

    version, code, ndim, _ = struct.unpack("<BBBB", blob[4:8])
    if version != VERSION:
        raise DataError(f"{source} has tensor format version {version}, expected {VERSION}")
    if code not in DTYPES:
        raise DataError(f"{source} has unknown dtype code {code}")

    dims_end = 8 + 4 * ndim
    if len(blob) < dims_end:
        raise DataError(f"{source} is truncated in its header")
    shape = struct.unpack(f"<{ndim}I", blob[8:dims_end])

    dtype = DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(blob) - dims_end != expected:
        raise DataError(f"{source} payload has {len(blob) - dims_end} bytes, expected {expected}")
    return np.frombuffer(blob, dtype=dtype, offset=dims_end).reshape(shape).astype(np.float64)


def write_tensor(path, array, dtype="f64"):
    with open(path, "wb") as f:
        f.write(encode_tensor(array, dtype))
    logger.debug("wrote tensor {} {}", path, np.shape(array))


def read_tensor(path):
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise DataError(f"cannot read tensor file {path}: {exc.strerror}") from exc
    return decode_tensor(blob, source=path)


##############################################################################
# Frames


def frame_names(directory):
    """Sorted PNG file names in a directory."""

    if not os.path.isdir(directory):
        raise DataError(f"frame directory {directory} does not exist")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(FRAME_SUFFIX))
    if not names:
        raise DataError(f"no {FRAME_SUFFIX} frames in {directory}")
    return names


def read_frame(path):
    """One 8-bit PNG as a (3, H, W) RGB array in [0, 1]."""

    image = cv2.imread(path, cv2.IMREAD_COLOR)
    if image is None:
        raise DataError(f"cannot read frame {path}")
    rgb = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)
    return np.transpose(rgb, (2, 0, 1)).astype(np.float64) / 255.0


def read_frames(directory, names=None):
    """(names, frames) with frames stacked as (N, 3, H, W)."""

    names = frame_names(directory) if names is None else list(names)
    frames = []
    for name in names:
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            raise DataError(f"missing frame {path}")
        frames.append(read_frame(path))

    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise DataError(f"frames in {directory} differ in size: {sorted(shapes)}")
    return names, np.stack(frames)


def read_matched_frames(dir_a, dir_b):
    """Frames of two directories that must hold the same file names."""

    names_a = frame_names(dir_a)
    names_b = frame_names(dir_b)
    for name in sorted(set(names_a) ^ set(names_b)):
        where = dir_b if name in names_a else dir_a
        raise DataError(f"frame {os.path.join(where, name)} is missing")

    _, a = read_frames(dir_a, names_a)
    _, b = read_frames(dir_b, names_a)
    return names_a, a, b


def to_uint8(frame):
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_frames(directory, frames, names=None, raw=False):
    """Write (N, 3, H, W) frames as PNGs, plus exact tensors when `raw`."""

    os.makedirs(directory, exist_ok=True)
    names = names or [f"{i:05d}{FRAME_SUFFIX}" for i in range(len(frames))]
    for name, frame in zip(names, frames):
        bgr = cv2.cvtColor(np.transpose(to_uint8(frame), (1, 2, 0)), cv2.COLOR_RGB2BGR)
        path = os.path.join(directory, name)
        if not cv2.imwrite(path, bgr):
            raise DataError(f"cannot write frame {path}")
        if raw:
            write_tensor(os.path.splitext(path)[0] + TENSOR_SUFFIX, frame)
    logger.info("wrote {} frames to {}", len(names), directory)
    return names


##############################################################################
# Weights and memory bank


def save_weights(directory, weights):
    os.makedirs(directory, exist_ok=True)
    for name, array in weights.items():
        write_tensor(os.path.join(directory, name + TENSOR_SUFFIX), array)


def load_weights(directory):
    if not os.path.isdir(directory):
        raise DataError(f"weights directory {directory} does not exist")
    return {name[:-len(TENSOR_SUFFIX)]: read_tensor(os.path.join(directory, name))
            for name in sorted(os.listdir(directory)) if name.endswith(TENSOR_SUFFIX)}


def save_bank(directory, bank):
    os.makedirs(directory, exist_ok=True)
    write_tensor(os.path.join(directory, "semantics" + TENSOR_SUFFIX), bank.semantics)
    write_tensor(os.path.join(directory, "textures" + TENSOR_SUFFIX), bank.textures)
    write_tensor(os.path.join(directory, "updates" + TENSOR_SUFFIX), np.array([bank.updates]))


def load_bank(directory):
    semantics = read_tensor(os.path.join(directory, "semantics" + TENSOR_SUFFIX))
    textures = read_tensor(os.path.join(directory, "textures" + TENSOR_SUFFIX))
    updates = read_tensor(os.path.join(directory, "updates" + TENSOR_SUFFIX))
    try:
        return MemoryBank(semantics, textures, updates=int(updates[0]))
    except ValueError as exc:
        raise DataError(f"memory bank in {directory} is inconsistent: {exc}") from exc


##############################################################################
# CSV


def write_csv(path, headers, rows):
    """Write dict rows under a fixed header list."""

    with open(path, "w", newline="") as out:
        writer = csv.DictWriter(out, fieldnames=headers)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.info("wrote {} rows to {}", len(rows), path)
