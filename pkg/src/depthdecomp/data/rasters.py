"""Depth raster and image file formats.

Two depth formats are supported:

* png16mm -- 16-bit grayscale PNG, value = depth in millimeters, 0 marks
  an invalid pixel (Kinect-style exports).
* rawf32 -- little-endian float32 grid in meters behind a 16-byte header
  (magic ``DRAW``, u32 width, u32 height, u32 reserved); NaN or 0 marks
  an invalid pixel.

Images travel as 8-bit RGB PNG.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ..decomposition import ORIGINAL, MetricDepthMap
from ..errors import BadHeaderError, UnknownFormatError, UnreadableFileError

RAWF32_MAGIC = b"DRAW"
PNG16MM = "png16mm"
RAWF32 = "rawf32"


def save_rawf32(path, data: np.ndarray, valid_mask: np.ndarray | None = None):
    """Write a float32 depth grid; invalid pixels are stored as NaN."""
    arr = np.asarray(data, dtype="<f4").copy()
    if valid_mask is not None:
        arr[~np.asarray(valid_mask, dtype=bool)] = np.nan
    h, w = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(struct.pack("<4sIII", RAWF32_MAGIC, w, h, 0))
        fh.write(arr.tobytes())


def load_rawf32(path) -> MetricDepthMap:
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"{path} does not exist")
    blob = path.read_bytes()
    if len(blob) < 16:
        raise BadHeaderError(f"{path}: truncated header")
    magic, w, h, _ = struct.unpack("<4sIII", blob[:16])
    if magic != RAWF32_MAGIC:
        raise BadHeaderError(f"{path}: bad magic {magic!r}")
    expected = 16 + 4 * w * h
    if len(blob) != expected:
        raise BadHeaderError(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    arr = np.frombuffer(blob[16:], dtype="<f4").reshape(h, w).astype(np.float64)
    valid = np.isfinite(arr) & (arr != 0)
    data = np.where(valid, arr, 0.0)
    return MetricDepthMap(data, space=ORIGINAL, valid_mask=valid)


def save_png16mm(path, data: np.ndarray, valid_mask: np.ndarray | None = None):
    """Write millimeter depths as 16-bit PNG; invalid pixels become 0."""
    arr = np.asarray(data, dtype=np.float64)
    mm = np.round(arr * 1000.0)
    if valid_mask is not None:
        mm = np.where(np.asarray(valid_mask, dtype=bool), mm, 0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mm).save(path)


def load_png16mm(path) -> MetricDepthMap:
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"{path} does not exist")
    try:
        img = Image.open(path)
        arr = np.asarray(img, dtype=np.uint32)
    except Exception as exc:
        raise UnreadableFileError(f"cannot read PNG {path}: {exc}") from exc
    if arr.ndim != 2:
        raise BadHeaderError(f"{path} is not single-channel")
    valid = arr > 0
    data = np.where(valid, arr / 1000.0, 0.0)
    return MetricDepthMap(data, space=ORIGINAL, valid_mask=valid)


def load_depth_raster(path, format: str) -> MetricDepthMap:
    """Load an original-space depth raster in the given format."""
    if format == RAWF32:
        return load_rawf32(path)
    if format == PNG16MM:
        return load_png16mm(path)
    raise UnknownFormatError(f"unknown depth format {format!r}")


def load_depth_raster_auto(path) -> MetricDepthMap:
    """Infer the format from the file extension (.raw or .png)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".raw":
        return load_rawf32(path)
    if suffix == ".png":
        return load_png16mm(path)
    raise UnknownFormatError(f"cannot infer depth format from {path}")


def save_image_png(path, image: np.ndarray):
    """Write an RGB image; accepts float in [0, 1] or uint8."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path)


def load_image_png(path) -> np.ndarray:
    """Read an RGB image as float32 in [0, 1], shape (H, W, 3)."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"{path} does not exist")
    try:
        img = Image.open(path).convert("RGB")
    except Exception as exc:
        raise UnreadableFileError(f"cannot read image {path}: {exc}") from exc
    return np.asarray(img, dtype=np.float32) / 255.0
