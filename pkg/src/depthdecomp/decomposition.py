"""Depth map decomposition algebra.

A metric depth map is split into a unitless z-score map plus the scale
statistics (mean, std) removed from it; the normalized map can be further
reduced to horizontal/vertical difference maps. All functions here are
pure, operate on 2-D numpy arrays in float64, and propagate validity
masks. Inverted-space depth m = 1/(m_o + 1) maps [0, inf) meters into
(0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateFitError,
    DegenerateMapError,
    NegativeDepthError,
    OutOfRangeError,
    ShapeMismatchError,
    SpaceMismatchError,
    TooSmallError,
)

ORIGINAL = "original"
INVERTED = "inverted"

STD_EPS = 1e-8


def _as_float2d(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D map, got shape {arr.shape}")
    return arr


def _as_mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise ShapeMismatchError(f"mask shape {m.shape} != data shape {shape}")
    return m


@dataclass
class ScaleStats:
    """Mean and standard deviation removed by normalization.

    Producers (znormalize) guarantee std > 0; a least-squares fit may
    legitimately return std <= 0 for anti-correlated inputs, so the
    dataclass itself does not validate.
    """

    mean: float
    std: float


@dataclass
class MetricDepthMap:
    """Per-pixel absolute depth with a validity mask.

    data holds meters in original space, or unitless values in (0, 1]
    in inverted space. Invalid pixels carry arbitrary values and must be
    ignored by every consumer.
    """

    data: np.ndarray
    space: str = ORIGINAL
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        self.data = _as_float2d(self.data)
        self.valid_mask = _as_mask(self.valid_mask, self.data.shape)
        if self.space not in (ORIGINAL, INVERTED):
            raise SpaceMismatchError(f"unknown depth space {self.space!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())


@dataclass
class NormalizedDepthMap:
    """Unitless z-score depth map, zero mean / unit std over valid pixels."""

    data: np.ndarray
    valid_mask: np.ndarray | None = None
    origin_stats: ScaleStats | None = None

    def __post_init__(self):
        self.data = _as_float2d(self.data)
        self.valid_mask = _as_mask(self.valid_mask, self.data.shape)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass
class GradientPair:
    """Forward-difference maps of a depth map.

    gx[i, j] = d[i, j+1] - d[i, j] and gy[i, j] = d[i+1, j] - d[i, j].
    Boundary entries (last column of gx, last row of gy) and entries with
    an invalid contributor are exactly 0. valid_mask marks entries whose
    gradients are trusted in both directions; it is what loss terms count.
    """

    gx: np.ndarray
    gy: np.ndarray
    valid_mask: np.ndarray | None = None

    def __post_init__(self):
        self.gx = _as_float2d(self.gx)
        self.gy = _as_float2d(self.gy)
        if self.gy.shape != self.gx.shape:
            raise ShapeMismatchError(
                f"gx shape {self.gx.shape} != gy shape {self.gy.shape}"
            )
        self.valid_mask = _as_mask(self.valid_mask, self.gx.shape)

    @property
    def shape(self) -> tuple[int, int]:
        return self.gx.shape


def invert_depth(d: MetricDepthMap) -> MetricDepthMap:
    """Map original-space depths m_o >= 0 to inverted depths 1/(m_o + 1)."""
    if d.space != ORIGINAL:
        raise SpaceMismatchError("invert_depth expects an original-space map")
    values = d.data[d.valid_mask]
    if values.size and values.min() < 0:
        raise NegativeDepthError(f"negative depth {values.min()} at a valid pixel")
    out = np.zeros_like(d.data)
    out[d.valid_mask] = 1.0 / (values + 1.0)
    return MetricDepthMap(out, space=INVERTED, valid_mask=d.valid_mask.copy())


def uninvert_depth(m: MetricDepthMap) -> MetricDepthMap:
    """Map inverted depths in (0, 1] back to original-space meters."""
    if m.space != INVERTED:
        raise SpaceMismatchError("uninvert_depth expects an inverted-space map")
    values = m.data[m.valid_mask]
    if values.size and (values.min() <= 0 or values.max() > 1):
        raise OutOfRangeError("inverted depths must lie in (0, 1] at valid pixels")
    out = np.zeros_like(m.data)
    out[m.valid_mask] = 1.0 / values - 1.0
    return MetricDepthMap(out, space=ORIGINAL, valid_mask=m.valid_mask.copy())


def znormalize(d: MetricDepthMap) -> tuple[NormalizedDepthMap, ScaleStats]:
    """Z-score normalize a depth map over its valid pixels.

    Uses the population (divide-by-count) standard deviation so that
    reconstruct_direct is an exact inverse. Raises DegenerateMapError for
    maps with fewer than 2 valid pixels or (near-)constant depth.
    """
    values = d.data[d.valid_mask]
    if values.size < 2:
        raise DegenerateMapError("normalization needs at least 2 valid pixels")
    mu = float(values.mean())
    sigma = float(values.std())  # population std
    if sigma <= STD_EPS:
        raise DegenerateMapError(f"constant depth map (std={sigma:g})")
    out = np.zeros_like(d.data)
    out[d.valid_mask] = (values - mu) / sigma
    stats = ScaleStats(mean=mu, std=sigma)
    return (
        NormalizedDepthMap(out, valid_mask=d.valid_mask.copy(), origin_stats=stats),
        stats,
    )


def reconstruct_direct(
    n: NormalizedDepthMap, stats: ScaleStats, space: str = ORIGINAL
) -> MetricDepthMap:
    """Undo znormalize: std * N + mean at valid pixels, 0 elsewhere."""
    if not np.isfinite(stats.std) or stats.std <= 0:
        raise DegenerateMapError(f"reconstruction needs std > 0, got {stats.std}")
    out = np.zeros_like(n.data)
    out[n.valid_mask] = stats.std * n.data[n.valid_mask] + stats.mean
    return MetricDepthMap(out, space=space, valid_mask=n.valid_mask.copy())


def spatial_gradients(data, valid_mask=None) -> GradientPair:
    """Forward-difference gradients of a 2-D map.

    The last column of gx and last row of gy are structurally 0. A gx/gy
    value is computed only where both contributing pixels are valid; the
    pair's valid_mask additionally requires validity in both directions,
    so the final row and column are always masked out.
    """
    arr = _as_float2d(data)
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise TooSmallError(f"gradients need at least 2x2, got {arr.shape}")
    mask = _as_mask(valid_mask, arr.shape)

    gx = np.zeros_like(arr)
    gy = np.zeros_like(arr)
    gx_ok = np.zeros_like(mask)
    gy_ok = np.zeros_like(mask)
    gx_ok[:, :-1] = mask[:, :-1] & mask[:, 1:]
    gy_ok[:-1, :] = mask[:-1, :] & mask[1:, :]
    gx[:, :-1] = arr[:, 1:] - arr[:, :-1]
    gy[:-1, :] = arr[1:, :] - arr[:-1, :]
    gx[~gx_ok] = 0.0
    gy[~gy_ok] = 0.0
    return GradientPair(gx, gy, valid_mask=gx_ok & gy_ok)


def least_squares_scale_shift(n_hat, m, valid_mask=None) -> ScaleStats:
    """Fit (std, mean) minimizing sum((std * n_hat + mean - m)^2) over valid pixels.

    Closed form: std = cov(n_hat, m) / var(n_hat), mean = mean(m) - std * mean(n_hat).
    This is the conventional per-image fitting used as a comparison path
    against learned scale recovery.
    """
    n_arr = _as_float2d(n_hat)
    m_arr = _as_float2d(m)
    if m_arr.shape != n_arr.shape:
        raise ShapeMismatchError(f"shapes differ: {n_arr.shape} vs {m_arr.shape}")
    mask = _as_mask(valid_mask, n_arr.shape)
    x = n_arr[mask]
    y = m_arr[mask]
    if x.size < 2:
        raise DegenerateFitError("fit needs at least 2 valid pixels")
    var = float(((x - x.mean()) ** 2).mean())
    if var <= STD_EPS:
        raise DegenerateFitError(f"constant prediction (var={var:g})")
    cov = float(((x - x.mean()) * (y - y.mean())).mean())
    scale = cov / var
    shift = float(y.mean()) - scale * float(x.mean())
    return ScaleStats(mean=shift, std=scale)
