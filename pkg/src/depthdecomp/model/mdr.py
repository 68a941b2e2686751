"""Mean-depth-residual block.

Patchwise attention over the metric decoder's half-resolution feature
map. A patch embedding (p x p convolution with stride p) plus learnable
positional encodings feed a small pre-norm transformer encoder; the
first output token regresses the map's mean depth through three
fully-connected layers, and the remaining tokens-1 vectors are
multiplied against a 3x3-convolution branch to produce a (tokens-1)-
channel feature map at the input resolution.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import PatchMismatchError
from .config import MDRConfig


class TransformerLayer(nn.Module):
    """Pre-norm transformer encoder layer (attention + MLP residuals)."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        h = self.norm2(x)
        return x + self.fc2(F.gelu(self.fc1(h)))

    def zero_residual_branches_(self) -> None:
        """Zero the branch outputs so the layer becomes the identity (test hook)."""
        with torch.no_grad():
            self.attn.out_proj.weight.zero_()
            self.attn.out_proj.bias.zero_()
            self.fc2.weight.zero_()
            self.fc2.bias.zero_()


class MDRBlock(nn.Module):
    """Patchwise attention with separate mean-depth regression.

    Construction pins the expected feature size; forward rejects inputs
    whose spatial dims differ or are not divisible by the patch size.
    """

    def __init__(self, in_channels: int, feature_size: tuple[int, int], cfg: MDRConfig):
        super().__init__()
        h, w = feature_size
        p = cfg.patch_size
        if h % p != 0 or w % p != 0:
            raise PatchMismatchError(f"feature {h}x{w} not divisible by patch {p}")
        self.tokens = (h // p) * (w // p)
        if self.tokens < 2:
            raise PatchMismatchError("need at least 2 tokens")
        self.feature_size = (h, w)
        self.out_channels = self.tokens - 1
        d = cfg.token_dim

        self.patch_embed = nn.Conv2d(in_channels, d, kernel_size=p, stride=p)
        self.pos_embed = nn.Parameter(torch.zeros(1, self.tokens, d))
        self.encoder = nn.ModuleList(
            TransformerLayer(d, cfg.num_heads, cfg.mlp_ratio)
            for _ in range(cfg.num_transformer_layers)
        )
        self.final_norm = nn.LayerNorm(d)
        self.mu_head = nn.Sequential(
            nn.Linear(d, d), nn.ReLU(), nn.Linear(d, d), nn.ReLU(), nn.Linear(d, 1)
        )
        self.mix_conv = nn.Conv2d(in_channels, d, kernel_size=3, padding=1)
        # scale the token/feature product like dot-product attention so the
        # mixed output keeps the magnitude of the convolutional branch
        self.mix_scale = d**-0.5

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.shape[-2:] != torch.Size(self.feature_size):
            raise PatchMismatchError(
                f"expected {self.feature_size} input, got {tuple(x.shape[-2:])}"
            )
        b = x.shape[0]
        h, w = self.feature_size

        tok = self.patch_embed(x).flatten(2).transpose(1, 2)  # (B, T, d)
        tok = tok + self.pos_embed
        for layer in self.encoder:
            tok = layer(tok)
        tok = self.final_norm(tok)

        mu_hat = self.mu_head(tok[:, 0]).squeeze(-1)  # (B,)
        mix = self.mix_conv(x).reshape(b, -1, h * w)  # (B, d, H*W)
        out = self.mix_scale * torch.bmm(tok[:, 1:], mix)
        return out.reshape(b, self.out_channels, h, w), mu_hat
