"""Image and flow files.

Images: 8-bit PNG and binary PPM/PGM through Pillow, mapped linearly to
[0, 1]. Flows: the Middlebury ``.flo`` layout, i.e. the bytes ``PIEH``, then
little-endian int32 width and height, then row-major interleaved float32
``(u, v)`` pairs.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, FormatError
from .grid import as_field, as_flow

FLO_MAGIC = b"PIEH"
IMAGE_SUFFIXES = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM", ".pnm": "PPM"}


def read_image(path) -> np.ndarray:
    """``(H, W, C)`` float64 in [0, 1]; C is 1 for grey images, 3 otherwise (alpha is dropped)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("L", "I;16", "I", "F", "1", "LA"):
                arr = np.asarray(img.convert("L"))
            else:
                arr = np.asarray(img.convert("RGB"))
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: unrecognised image data") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def to_uint8(field) -> np.ndarray:
    f = as_field(field)
    return np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8)


def write_image(field, path) -> None:
    """Write a 1- or 3-channel field; the format follows the suffix (.png, .ppm, .pgm)."""
    path = Path(path)
    fmt = IMAGE_SUFFIXES.get(path.suffix.lower())
    if fmt is None:
        raise FormatError(f"{path}: unsupported image suffix (use one of {sorted(IMAGE_SUFFIXES)})")
    data = to_uint8(field)
    c = data.shape[2]
    if c == 1:
        img = Image.fromarray(data[:, :, 0], mode="L")
    elif c == 3:
        if path.suffix.lower() == ".pgm":
            raise DimensionError("PGM holds one channel")
        img = Image.fromarray(data, mode="RGB")
    else:
        raise DimensionError(f"images need 1 or 3 channels, got {c}")
    img.save(path, format=fmt)


def write_flo(flow, path) -> None:
    flow = as_flow(flow)
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(FLO_MAGIC + struct.pack("<ii", w, h))
        f.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path) -> np.ndarray:
    """``(H, W, 2)`` float64 flow (exactly the stored float32 values)."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != FLO_MAGIC:
        raise FormatError(f"{path}: missing PIEH magic")
    w, h = struct.unpack_from("<ii", data, 4)
    if w < 0 or h < 0:
        raise FormatError(f"{path}: negative dimensions {w}x{h}")
    n = 2 * w * h
    if len(data) != 12 + 4 * n:
        raise FormatError(f"{path}: {w}x{h} flow needs {12 + 4 * n} bytes, file has {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=12).astype(np.float64).reshape(h, w, 2)
