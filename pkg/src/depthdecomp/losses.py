"""Training objectives.

All losses are pure functions of prediction tensors, target tensors, and
boolean validity masks; every one is differentiable so parameter
gradients come from autograd and can be checked against central finite
differences. Masked sums are normalized by T, the number of valid pixels
in the ground truth. Inputs may carry leading batch dimensions; T then
counts valid pixels across the whole batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .decomposition import INVERTED
from .errors import (
    EmptyMaskError,
    MissingTargetError,
    NonPositiveDepthError,
    ScaleTooSmallError,
    ShapeMismatchError,
    SpaceMismatchError,
)

LOSS_TERMS = (
    "L_G",
    "L_N",
    "L_Nx",
    "L_Ny",
    "L_M",
    "L_Mx",
    "L_My",
    "L_muM",
    "L_logM",
)


@dataclass
class LossConfig:
    """Scales for the multiscale gradient losses and per-term weights.

    valid_count_mode is informational: T always counts valid ground-truth
    pixels; no alternative normalization is implemented.
    """

    gradient_scales: tuple[float, ...] = (0.5, 0.25, 0.125)
    term_weights: dict[str, float] = field(
        default_factory=lambda: dict.fromkeys(LOSS_TERMS, 1.0)
    )
    valid_count_mode: str = "valid_pixels"

    def __post_init__(self):
        if any(s <= 0 or s > 1 for s in self.gradient_scales):
            raise ValueError("gradient scales must lie in (0, 1]")
        if any(w < 0 for w in self.term_weights.values()):
            raise ValueError("term weights must be nonnegative")
        if not any(w > 0 for w in self.term_weights.values()):
            raise ValueError("at least one term weight must be positive")

    def weight(self, name: str) -> float:
        return self.term_weights.get(name, 1.0)


def _check_shapes(*tensors):
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeMismatchError(f"shape {tuple(t.shape)} != {tuple(shape)}")


def _valid_count(valid: torch.Tensor) -> torch.Tensor:
    t = valid.sum()
    if t.item() == 0:
        raise EmptyMaskError("no valid pixels")
    return t


def masked_l1(pred: torch.Tensor, target: torch.Tensor, valid: torch.Tensor):
    """Mean absolute error over valid pixels."""
    _check_shapes(pred, target, valid)
    t = _valid_count(valid)
    return ((pred - target).abs() * valid).sum() / t


def loss_g(gx_hat, gy_hat, gx, gy, valid):
    """L1 loss on both gradient channels, normalized by one valid count."""
    _check_shapes(gx_hat, gy_hat, gx, gy, valid)
    t = _valid_count(valid)
    sum_x = ((gx_hat - gx).abs() * valid).sum()
    sum_y = ((gy_hat - gy).abs() * valid).sum()
    return (sum_x + sum_y) / t


def loss_n(n_hat, n, valid):
    """L1 loss on normalized depth maps (already scale-invariant)."""
    return masked_l1(n_hat, n, valid)


# -- bilinear rescaling ------------------------------------------------------


def _axis_weights(n_in: int, n_out: int, scale: float, device, dtype):
    """Half-pixel-center source indices and weights for one axis."""
    src = (torch.arange(n_out, device=device, dtype=dtype) + 0.5) / scale - 0.5
    i0f = torch.floor(src)
    frac = src - i0f
    i0 = i0f.long().clamp(0, n_in - 1)
    i1 = (i0f.long() + 1).clamp(0, n_in - 1)
    return i0, i1, 1.0 - frac, frac


def scaled_size(n: int, scale: float) -> int:
    return int(math.floor(n * scale + 1e-9))


def bilinear_downscale(x: torch.Tensor, scale: float) -> torch.Tensor:
    """Bilinear rescale of the last two dims, half-pixel centers.

    Matches the align-corners-false convention: output pixel o samples
    source coordinate (o + 0.5) / scale - 0.5.
    """
    h, w = x.shape[-2:]
    hs, ws = scaled_size(h, scale), scaled_size(w, scale)
    if hs < 1 or ws < 1:
        raise ScaleTooSmallError(f"scale {scale} collapses {h}x{w}")
    dtype = x.dtype if x.is_floating_point() else torch.float64
    i0y, i1y, w0y, w1y = _axis_weights(h, hs, scale, x.device, dtype)
    i0x, i1x, w0x, w1x = _axis_weights(w, ws, scale, x.device, dtype)
    rows = x.index_select(-2, i0y) * w0y.unsqueeze(-1) + x.index_select(
        -2, i1y
    ) * w1y.unsqueeze(-1)
    return rows.index_select(-1, i0x) * w0x + rows.index_select(-1, i1x) * w1x


def downscale_valid_mask(valid: torch.Tensor, scale: float) -> torch.Tensor:
    """Validity of a bilinearly rescaled map.

    An output pixel is valid iff every source pixel with nonzero bilinear
    weight is valid.
    """
    h, w = valid.shape[-2:]
    hs, ws = scaled_size(h, scale), scaled_size(w, scale)
    if hs < 1 or ws < 1:
        raise ScaleTooSmallError(f"scale {scale} collapses {h}x{w}")
    v = valid.to(torch.float64)
    i0y, i1y, w0y, w1y = _axis_weights(h, hs, scale, valid.device, torch.float64)
    i0x, i1x, w0x, w1x = _axis_weights(w, ws, scale, valid.device, torch.float64)
    rows = torch.where(
        (w1y > 0).unsqueeze(-1),
        torch.minimum(v.index_select(-2, i0y), v.index_select(-2, i1y)),
        v.index_select(-2, i0y),
    )
    out = torch.where(
        w1x > 0,
        torch.minimum(rows.index_select(-1, i0x), rows.index_select(-1, i1x)),
        rows.index_select(-1, i0x),
    )
    return out == 1.0


def _grad_entry_valid(valid: torch.Tensor) -> torch.Tensor:
    """Entries whose forward differences are trusted in both directions."""
    out = torch.zeros_like(valid)
    out[..., :-1, :-1] = (
        valid[..., :-1, :-1] & valid[..., :-1, 1:] & valid[..., 1:, :-1]
    )
    return out


def loss_grad_multiscale_xy(d_hat, d, valid, scales):
    """Per-direction multiscale gradient losses.

    For each scale s, both maps are bilinearly rescaled, forward
    differences are compared over entries whose contributing pixels are
    all valid, and the absolute sum is normalized by T * s^2 with T the
    full-resolution valid count. Returns the sums over scales for the
    horizontal and vertical directions separately.
    """
    _check_shapes(d_hat, d, valid)
    t = _valid_count(valid)
    h, w = d.shape[-2:]
    lx = d_hat.new_zeros(())
    ly = d_hat.new_zeros(())
    for s in scales:
        if scaled_size(h, s) < 2 or scaled_size(w, s) < 2:
            raise ScaleTooSmallError(f"scale {s} shrinks {h}x{w} below 2x2")
        p = bilinear_downscale(d_hat, s)
        g = bilinear_downscale(d, s)
        gv = _grad_entry_valid(downscale_valid_mask(valid, s))
        dx = (p[..., :, 1:] - p[..., :, :-1]) - (g[..., :, 1:] - g[..., :, :-1])
        dy = (p[..., 1:, :] - p[..., :-1, :]) - (g[..., 1:, :] - g[..., :-1, :])
        norm = t * s * s
        lx = lx + (dx.abs() * gv[..., :, :-1]).sum() / norm
        ly = ly + (dy.abs() * gv[..., :-1, :]).sum() / norm
    return lx, ly


def loss_grad_multiscale(d_hat, d, valid, scales=(0.5, 0.25, 0.125)):
    """Combined horizontal + vertical multiscale gradient loss."""
    lx, ly = loss_grad_multiscale_xy(d_hat, d, valid, scales)
    return lx + ly


def loss_m(m_hat, m, valid, pred_space: str = INVERTED, target_space: str = INVERTED):
    """L1 loss on inverted-space metric depth maps."""
    if pred_space != INVERTED or target_space != INVERTED:
        raise SpaceMismatchError("loss_m operates on inverted-space maps")
    return masked_l1(m_hat, m, valid)


def loss_mu(m_hat, valid, mu_target):
    """L1 distance between the prediction's valid-pixel mean and the target mean.

    With batched inputs the mean is taken per sample and the absolute
    errors are averaged over the batch.
    """
    _check_shapes(m_hat, valid)
    if m_hat.dim() == 2:
        t = _valid_count(valid)
        mean = (m_hat * valid).sum() / t
        return (mean - mu_target).abs().squeeze()
    counts = valid.sum(dim=(-2, -1))
    if (counts == 0).any():
        raise EmptyMaskError("a batch sample has no valid pixels")
    means = (m_hat * valid).sum(dim=(-2, -1)) / counts
    return (means - mu_target).abs().mean()


def loss_logm(m_hat, m, valid):
    """L1 loss between natural logs of strictly positive depths."""
    _check_shapes(m_hat, m, valid)
    t = _valid_count(valid)
    if ((m_hat <= 0) & valid).any() or ((m <= 0) & valid).any():
        raise NonPositiveDepthError("log loss needs positive depths at valid pixels")
    safe_p = torch.where(valid, m_hat, torch.ones_like(m_hat))
    safe_g = torch.where(valid, m, torch.ones_like(m))
    return ((safe_p.log() - safe_g.log()).abs() * valid).sum() / t


@dataclass
class LossTargets:
    """Target bundle for total_loss; metric fields are None for relative-only data."""

    gx: torch.Tensor | None = None
    gy: torch.Tensor | None = None
    grad_valid: torch.Tensor | None = None
    n: torch.Tensor | None = None
    n_valid: torch.Tensor | None = None
    m: torch.Tensor | None = None
    m_valid: torch.Tensor | None = None
    mu: torch.Tensor | None = None
    m_space: str = INVERTED


def _squeeze_channel(t: torch.Tensor) -> torch.Tensor:
    if t.dim() >= 3 and t.shape[-3] == 1:
        return t.squeeze(-3)
    return t


def total_loss(output, targets: LossTargets, cfg: LossConfig, has_metric_label):
    """Weighted sum of all applicable loss terms plus a per-term breakdown.

    G/N terms apply whenever the network emits those heads; metric terms
    apply only to samples flagged has_metric_label (a bool, or a bool
    tensor selecting batch samples). The breakdown maps term names to
    unweighted values; inapplicable terms are absent.
    """
    terms: dict[str, torch.Tensor] = {}

    if output.g_hat is not None:
        if targets.gx is None or targets.gy is None or targets.grad_valid is None:
            raise MissingTargetError("network emits gradients but targets lack them")
        terms["L_G"] = loss_g(
            output.g_hat[..., 0, :, :],
            output.g_hat[..., 1, :, :],
            targets.gx,
            targets.gy,
            targets.grad_valid,
        )

    if output.n_hat is not None:
        if targets.n is None or targets.n_valid is None:
            raise MissingTargetError("network emits normalized depth but targets lack it")
        n_hat = _squeeze_channel(output.n_hat)
        terms["L_N"] = loss_n(n_hat, targets.n, targets.n_valid)
        lnx, lny = loss_grad_multiscale_xy(
            n_hat, targets.n, targets.n_valid, cfg.gradient_scales
        )
        terms["L_Nx"] = lnx
        terms["L_Ny"] = lny

    if isinstance(has_metric_label, torch.Tensor):
        metric_idx = has_metric_label.nonzero(as_tuple=True)[0]
        any_metric = metric_idx.numel() > 0
    else:
        metric_idx = None
        any_metric = bool(has_metric_label)

    if any_metric:
        if targets.m is None or targets.m_valid is None or targets.mu is None:
            raise MissingTargetError("metric-labeled sample without metric targets")
        m_hat = _squeeze_channel(output.m_hat)
        m, m_valid, mu = targets.m, targets.m_valid, targets.mu
        if metric_idx is not None:
            m_hat = m_hat.index_select(0, metric_idx)
            m = m.index_select(0, metric_idx)
            m_valid = m_valid.index_select(0, metric_idx)
            mu = mu.index_select(0, metric_idx)
        terms["L_M"] = loss_m(m_hat, m, m_valid, target_space=targets.m_space)
        lmx, lmy = loss_grad_multiscale_xy(m_hat, m, m_valid, cfg.gradient_scales)
        terms["L_Mx"] = lmx
        terms["L_My"] = lmy
        if output.mu_hat is not None:
            terms["L_muM"] = loss_mu(m_hat, m_valid, mu)
        terms["L_logM"] = loss_logm(m_hat, m, m_valid)

    if not terms:
        raise MissingTargetError("no loss terms applicable to this sample")

    total = sum(cfg.weight(name) * value for name, value in terms.items())
    breakdown = {name: float(value.detach()) for name, value in terms.items()}
    return total, breakdown
