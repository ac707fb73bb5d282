"""Stokes-image binary format (SVIM) and 8-bit PNG export.

Layout (little-endian): magic ``SVIM`` (4 ASCII bytes), u32 version = 1,
u32 width, u32 height, u32 channel_count = 17, then width x height x 17
float32 values row-major from the top-left pixel. Channels per pixel:
12 Stokes components (R s0..s3, G s0..s3, B s0..s3), hit mask stored as
0.0/1.0, surface normal xyz, depth.

Float payloads stay linear; the sRGB transfer is applied only when
exporting PNG previews.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

from .render import StokesImage

MAGIC = b"SVIM"
VERSION = 1
CHANNELS = 17
_HEADER = struct.Struct("<4sIIII")


class SvimFormatError(ValueError):
    """Malformed SVIM payload; the message names the offending byte offset."""


def _pack_channels(img: StokesImage) -> np.ndarray:
    h, w = img.height, img.width
    data = np.empty((h, w, CHANNELS), dtype=np.float32)
    data[..., 0:12] = img.stokes.reshape(h, w, 12)
    data[..., 12] = img.mask.astype(np.float32)
    data[..., 13:16] = img.normals
    data[..., 16] = img.depth
    return data


def write_stokes_image(img: StokesImage, path) -> None:
    """Serialize a Stokes image; raises on non-finite values."""
    data = _pack_channels(img)
    finite = np.isfinite(data.reshape(-1))
    if not finite.all():
        offset = _HEADER.size + int(np.flatnonzero(~finite)[0]) * 4
        raise SvimFormatError(f"non-finite float at byte offset {offset}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, img.width, img.height, CHANNELS))
        fh.write(data.astype("<f4").tobytes())


def read_stokes_image(path) -> StokesImage:
    """Parse a SVIM file back into a :class:`StokesImage`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise SvimFormatError(
            f"truncated header: expected {_HEADER.size} bytes, got {len(raw)}"
        )
    magic, version, width, height, channels = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SvimFormatError("bad magic at byte offset 0")
    if version != VERSION:
        raise SvimFormatError(f"unsupported version {version} at byte offset 4")
    if channels != CHANNELS:
        raise SvimFormatError(f"unexpected channel count {channels} at byte offset 16")
    expected = _HEADER.size + width * height * channels * 4
    if len(raw) != expected:
        raise SvimFormatError(
            f"truncated payload: expected {expected} bytes, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(height, width, channels)
    finite = np.isfinite(data.reshape(-1))
    if not finite.all():
        offset = _HEADER.size + int(np.flatnonzero(~finite)[0]) * 4
        raise SvimFormatError(f"non-finite float at byte offset {offset}")
    data = data.astype(np.float64)
    return StokesImage(
        width=width,
        height=height,
        stokes=data[..., 0:12].reshape(height, width, 3, 4),
        mask=data[..., 12] != 0.0,
        normals=data[..., 13:16],
        depth=data[..., 16],
    )


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    """sRGB transfer function on linear values clipped to [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def write_png(values: np.ndarray, path, srgb: bool = True) -> None:
    """Export a (H, W) or (H, W, 3) float image as 8-bit PNG."""
    values = np.asarray(values, dtype=float)
    encoded = linear_to_srgb(values) if srgb else np.clip(values, 0.0, 1.0)
    quantized = np.round(encoded * 255.0).astype(np.uint8)
    if quantized.ndim == 2:
        Image.fromarray(quantized, mode="L").save(path)
    elif quantized.ndim == 3 and quantized.shape[-1] == 3:
        Image.fromarray(quantized, mode="RGB").save(path)
    else:
        raise ValueError("expected (H, W) or (H, W, 3) image")
