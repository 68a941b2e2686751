"""Depth evaluation metrics.

Error metrics (RMSE, REL, log10, delta thresholds) operate on
original-space depths in meters. Ordinal metrics (Kendall's tau, WHDR)
only use depth order and accept any monotone representation. Kendall's
tau runs in O(n log n) via merge-sort inversion counting and matches the
O(n^2) pair enumeration exactly, ties included.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyMaskError,
    MissingPairError,
    NonPositiveGroundTruthError,
    ShapeMismatchError,
    TooFewPixelsError,
    UnreadableFileError,
)

REPORT_VERSION = 1


def _validate(m_hat, m, mask) -> tuple[np.ndarray, np.ndarray]:
    m_hat = np.asarray(m_hat, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if m_hat.shape != m.shape:
        raise ShapeMismatchError(f"shapes differ: {m_hat.shape} vs {m.shape}")
    if mask is None:
        mask = np.ones(m.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != m.shape:
        raise ShapeMismatchError(f"mask shape {mask.shape} != {m.shape}")
    if not mask.any():
        raise EmptyMaskError("no valid pixels")
    return m_hat[mask], m[mask]


def rmse(m_hat, m, mask=None) -> float:
    """Root mean squared error over valid pixels, in meters."""
    p, g = _validate(m_hat, m, mask)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def rel(m_hat, m, mask=None) -> float:
    """Mean absolute error relative to the ground truth."""
    p, g = _validate(m_hat, m, mask)
    if g.min() <= 0:
        raise NonPositiveGroundTruthError("REL needs positive ground-truth depths")
    return float(np.mean(np.abs(p - g) / g))


def log10_error(m_hat, m, mask=None) -> float:
    """Mean absolute base-10 log error."""
    p, g = _validate(m_hat, m, mask)
    if g.min() <= 0:
        raise NonPositiveGroundTruthError("log10 needs positive ground-truth depths")
    if p.min() <= 0:
        raise NonPositiveGroundTruthError("log10 needs positive predictions")
    return float(np.mean(np.abs(np.log10(p) - np.log10(g))))


def delta_k(m_hat, m, mask=None, k: int = 1) -> float:
    """Fraction of pixels with max(pred/gt, gt/pred) < 1.25**k."""
    p, g = _validate(m_hat, m, mask)
    if g.min() <= 0:
        raise NonPositiveGroundTruthError("delta needs positive ground-truth depths")
    if p.min() <= 0:
        raise NonPositiveGroundTruthError("delta needs positive predictions")
    ratio = np.maximum(p / g, g / p)
    return float(np.mean(ratio < 1.25**k))


def deltas(m_hat, m, mask=None) -> tuple[float, float, float]:
    return tuple(delta_k(m_hat, m, mask, k) for k in (1, 2, 3))


# -- Kendall's tau -----------------------------------------------------------


def _merge_count(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Sort a and count strict inversions (pairs i < j with a[i] > a[j])."""
    n = a.size
    if n <= 1:
        return a, 0
    mid = n // 2
    left, c_left = _merge_count(a[:mid])
    right, c_right = _merge_count(a[mid:])
    # each right element is preceded by every strictly-greater left element
    pos = np.searchsorted(left, right, side="right")
    cross = int(left.size) * int(right.size) - int(pos.sum(dtype=np.int64))
    merged = np.empty(n, dtype=a.dtype)
    right_idx = pos + np.arange(right.size)
    merged[right_idx] = right
    keep = np.ones(n, dtype=bool)
    keep[right_idx] = False
    merged[keep] = left
    return merged, c_left + c_right + cross


def _tie_pair_count(sorted_vals: np.ndarray) -> int:
    """Sum of C(run, 2) over runs of equal values in a sorted array."""
    if sorted_vals.size == 0:
        return 0
    boundaries = np.flatnonzero(np.diff(sorted_vals) != 0)
    runs = np.diff(np.concatenate(([0], boundaries + 1, [sorted_vals.size])))
    return int((runs * (runs - 1) // 2).sum())


def kendall_tau(d_hat, d, mask=None) -> float:
    """Kendall rank correlation (concordant - discordant) / C(n, 2).

    Tie pairs in either map count as neither concordant nor discordant
    (tau-a denominator). O(n log n): valid pixels are sorted
    lexicographically by (d, d_hat) and discordant pairs fall out as
    merge-sort inversions of the d_hat sequence.
    """
    d_hat = np.asarray(d_hat, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    if d_hat.shape != d.shape:
        raise ShapeMismatchError("prediction and ground truth sizes differ")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        if mask.shape != d.shape:
            raise ShapeMismatchError("mask size differs from maps")
        d_hat, d = d_hat[mask], d[mask]
    n = d.size
    if n < 2:
        raise TooFewPixelsError("Kendall's tau needs at least 2 valid pixels")

    order = np.lexsort((d_hat, d))
    x = d[order]
    y = d_hat[order]
    total = n * (n - 1) // 2
    ties_x = _tie_pair_count(x)
    # joint ties: runs of equal (x, y); y is sorted within each x run
    pair_change = (np.diff(x) != 0) | (np.diff(y) != 0)
    joint_runs = np.diff(
        np.concatenate(([0], np.flatnonzero(pair_change) + 1, [n]))
    )
    ties_xy = int((joint_runs * (joint_runs - 1) // 2).sum())
    ties_y = _tie_pair_count(np.sort(y))
    _, discordant = _merge_count(y)
    concordant_minus_discordant = (
        total - ties_x - ties_y + ties_xy - 2 * discordant
    )
    return concordant_minus_discordant / total


# -- WHDR --------------------------------------------------------------------


def _ordinal_labels(a: np.ndarray, b: np.ndarray, tolerance: float) -> np.ndarray:
    """+1 / -1 / 0 labels for point pairs.

    The relative difference (a - b) / max(|a|, |b|) must exceed the
    tolerance for a closer/farther label; otherwise the pair is 'equal'.
    """
    denom = np.maximum(np.abs(a), np.abs(b))
    diff = np.where(denom > 0, (a - b) / np.where(denom > 0, denom, 1.0), 0.0)
    return np.where(diff > tolerance, 1, np.where(diff < -tolerance, -1, 0))


def whdr(
    d_hat,
    d,
    mask=None,
    num_pairs: int = 50_000,
    tolerance: float = 0.03,
    rng_seed: int = 0,
) -> float:
    """Disagreement rate of predicted vs ground-truth ordinal labels.

    Samples num_pairs distinct-index pixel pairs with a seeded generator
    and labels both maps with the same tolerance rule; returns the
    fraction of pairs whose labels differ.
    """
    d_hat = np.asarray(d_hat, dtype=np.float64).ravel()
    d = np.asarray(d, dtype=np.float64).ravel()
    if d_hat.shape != d.shape:
        raise ShapeMismatchError("prediction and ground truth sizes differ")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).ravel()
        d_hat, d = d_hat[mask], d[mask]
    n = d.size
    if n < 2:
        raise TooFewPixelsError("WHDR needs at least 2 valid pixels")
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")

    rng = np.random.default_rng(rng_seed)
    first = rng.integers(0, n, size=num_pairs)
    second = rng.integers(0, n, size=num_pairs)
    clash = first == second
    while clash.any():
        second[clash] = rng.integers(0, n, size=int(clash.sum()))
        clash = first == second

    gt = _ordinal_labels(d[first], d[second], tolerance)
    pred = _ordinal_labels(d_hat[first], d_hat[second], tolerance)
    return float(np.mean(gt != pred))


# -- Evaluation protocol -----------------------------------------------------


def crop_window(
    shape: tuple[int, int], fractions: tuple[float, float, float, float]
) -> tuple[int, int, int, int]:
    """Pixel bounds (r0, r1, c0, c1) of fractional crop bounds."""
    h, w = shape
    top, bottom, left, right = fractions
    return (
        int(round(top * h)),
        int(round(bottom * h)),
        int(round(left * w)),
        int(round(right * w)),
    )


def eigen_center_crop(
    mask: np.ndarray, fractions: tuple[float, float, float, float]
) -> np.ndarray:
    """Restrict a validity mask to the central evaluation sub-window.

    Implemented as mask intersection rather than slicing so the crop is
    idempotent and applies identically to prediction, ground truth, and
    mask (all share the one mask).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ShapeMismatchError(f"expected 2-D mask, got {mask.shape}")
    r0, r1, c0, c1 = crop_window(mask.shape, fractions)
    window = np.zeros_like(mask)
    window[r0:r1, c0:c1] = True
    return mask & window


# NYUv2 center crop: rows 45..471, cols 41..601 on 480x640 frames.
NYU_CROP_FRACTIONS = (45 / 480, 471 / 480, 41 / 640, 601 / 640)


@dataclass
class EvalProtocol:
    """Settings controlling per-image metric computation."""

    name: str = "synthetic"
    crop_fractions: tuple[float, float, float, float] | None = None
    whdr_pairs: int = 50_000
    whdr_tolerance: float = 0.03
    whdr_seed: int = 0
    tau_pixel_cap: int | None = None
    tau_seed: int = 0
    pred_clamp_min: float = 1e-6


PROTOCOL_PRESETS = {
    "synthetic": EvalProtocol(name="synthetic"),
    "nyuv2-crop": EvalProtocol(name="nyuv2-crop", crop_fractions=NYU_CROP_FRACTIONS),
}


@dataclass
class MetricReport:
    """Evaluation results for one image or a corpus mean."""

    rmse: float
    rel: float
    log10: float
    delta: tuple[float, float, float]
    kendall_tau: float
    whdr: float
    n_valid: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["delta"] = list(self.delta)
        d["version"] = REPORT_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            rmse=d["rmse"],
            rel=d["rel"],
            log10=d["log10"],
            delta=tuple(d["delta"]),
            kendall_tau=d["kendall_tau"],
            whdr=d["whdr"],
            n_valid=d["n_valid"],
        )


def compute_report(
    pred: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray | None,
    protocol: EvalProtocol,
) -> MetricReport:
    """Full metric suite for one original-space prediction/ground-truth pair."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if mask is None:
        mask = np.ones(gt.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if protocol.crop_fractions is not None:
        mask = eigen_center_crop(mask, protocol.crop_fractions)
    if not mask.any():
        raise EmptyMaskError("no valid pixels after cropping")
    pred = np.maximum(pred, protocol.pred_clamp_min)

    tau_mask = mask
    n_valid = int(mask.sum())
    if protocol.tau_pixel_cap is not None and n_valid > protocol.tau_pixel_cap:
        rng = np.random.default_rng(protocol.tau_seed)
        idx = np.flatnonzero(mask.ravel())
        keep = rng.choice(idx, size=protocol.tau_pixel_cap, replace=False)
        tau_mask = np.zeros_like(mask).ravel()
        tau_mask[keep] = True
        tau_mask = tau_mask.reshape(mask.shape)

    return MetricReport(
        rmse=rmse(pred, gt, mask),
        rel=rel(pred, gt, mask),
        log10=log10_error(pred, gt, mask),
        delta=deltas(pred, gt, mask),
        kendall_tau=kendall_tau(pred, gt, tau_mask),
        whdr=whdr(
            pred,
            gt,
            mask,
            num_pairs=protocol.whdr_pairs,
            tolerance=protocol.whdr_tolerance,
            rng_seed=protocol.whdr_seed,
        ),
        n_valid=n_valid,
    )


def mean_report(reports: list[MetricReport]) -> MetricReport:
    """Field-wise arithmetic mean over per-image reports."""
    if not reports:
        raise EmptyMaskError("cannot average zero reports")
    return MetricReport(
        rmse=float(np.mean([r.rmse for r in reports])),
        rel=float(np.mean([r.rel for r in reports])),
        log10=float(np.mean([r.log10 for r in reports])),
        delta=tuple(
            float(np.mean([r.delta[k] for r in reports])) for k in range(3)
        ),
        kendall_tau=float(np.mean([r.kendall_tau for r in reports])),
        whdr=float(np.mean([r.whdr for r in reports])),
        n_valid=float(np.mean([r.n_valid for r in reports])),
    )


def evaluate_corpus(
    pred_dir, gt_dir, protocol: EvalProtocol
) -> tuple[dict[str, MetricReport], MetricReport]:
    """Evaluate matching prediction/ground-truth raster directories.

    Files are paired by stem; every prediction must have a ground truth
    and vice versa. Returns per-image reports keyed by stem plus the
    corpus mean.
    """
    from .data.rasters import load_depth_raster_auto

    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    if not pred_dir.is_dir():
        raise UnreadableFileError(f"prediction directory {pred_dir} does not exist")
    if not gt_dir.is_dir():
        raise UnreadableFileError(f"ground-truth directory {gt_dir} does not exist")

    preds = {p.stem: p for p in sorted(pred_dir.iterdir()) if p.is_file()}
    gts = {p.stem: p for p in sorted(gt_dir.iterdir()) if p.is_file()}
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        raise MissingPairError(f"unpaired raster stems: {missing[:5]}")
    if not preds:
        raise MissingPairError("no raster pairs found")

    per_image = {}
    for stem in sorted(preds):
        pred_map = load_depth_raster_auto(preds[stem])
        gt_map = load_depth_raster_auto(gts[stem])
        if pred_map.shape != gt_map.shape:
            raise ShapeMismatchError(
                f"{stem}: prediction {pred_map.shape} vs ground truth {gt_map.shape}"
            )
        mask = pred_map.valid_mask & gt_map.valid_mask
        per_image[stem] = compute_report(pred_map.data, gt_map.data, mask, protocol)
    return per_image, mean_report(list(per_image.values()))


def write_report_file(path, per_image: dict[str, MetricReport], summary: MetricReport):
    """One JSON record per image plus a summary record, line-delimited."""
    path = Path(path)
    with path.open("w") as fh:
        for stem in sorted(per_image):
            rec = {"type": "image", "id": stem, **per_image[stem].as_dict()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        fh.write(
            json.dumps({"type": "summary", **summary.as_dict()}, sort_keys=True) + "\n"
        )
