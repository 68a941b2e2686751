"""Colorized depth and error-map rendering for the CLI outputs."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

from matplotlib import colormaps  # noqa: E402

from .data.rasters import save_image_png  # noqa: E402

DEPTH_COLORMAP = "viridis"


def colorize(arr: np.ndarray, vmin: float, vmax: float,
             cmap: str = DEPTH_COLORMAP) -> np.ndarray:
    """Map values to RGB uint8 through a perceptually uniform colormap."""
    arr = np.asarray(arr, dtype=np.float64)
    span = vmax - vmin
    normalized = (arr - vmin) / span if span > 0 else np.zeros_like(arr)
    rgba = colormaps[cmap](np.clip(normalized, 0.0, 1.0))
    return (rgba[..., :3] * 255).round().astype(np.uint8)


def save_colorized_png(path, arr: np.ndarray, mask: np.ndarray | None = None,
                       cmap: str = DEPTH_COLORMAP) -> dict:
    """Write a colorized raster plus a JSON sidecar recording min/max/colormap.

    The annotations always equal the raster's own valid-pixel extrema so
    images are reproducible from the raster alone.
    """
    arr = np.asarray(arr, dtype=np.float64)
    values = arr[mask] if mask is not None else arr.ravel()
    vmin = float(values.min())
    vmax = float(values.max())
    rgb = colorize(arr, vmin, vmax, cmap)
    if mask is not None:
        rgb[~mask] = 0
    save_image_png(path, rgb)
    meta = {"min": vmin, "max": vmax, "colormap": cmap}
    Path(path).with_suffix(".meta.json").write_text(
        json.dumps(meta, sort_keys=True) + "\n"
    )
    return meta


def save_error_map_png(path, pred: np.ndarray, gt: np.ndarray,
                       mask: np.ndarray | None = None) -> None:
    """Grayscale error image: brightness proportional to absolute error.

    A perfect prediction yields an all-black image.
    """
    err = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64))
    if mask is not None:
        err = np.where(mask, err, 0.0)
    peak = err.max()
    scaled = err / peak if peak > 0 else np.zeros_like(err)
    gray = (scaled * 255).round().astype(np.uint8)
    save_image_png(path, np.repeat(gray[..., None], 3, axis=-1))
