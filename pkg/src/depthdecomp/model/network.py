"""Shared encoder with gradient, normalized-depth, and metric-depth decoders.

Feature flow is strictly unidirectional: the gradient decoder's running
features are fused into the normalized-depth decoder, whose features are
fused into the metric decoder. The metric decoder optionally carries the
patchwise-attention block between its fourth and fifth upsampling blocks
and re-adds the regressed mean before a sigmoid bounds the output into
the (0, 1) inverted-depth range.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ShapeMismatchError, UnknownDecoderError
from .blocks import EncoderStage, SkipAdapter, UpsampleBlock, init_parameters
from .config import ModelConfig
from .mdr import MDRBlock

DECODER_IDS = ("G", "N", "M")


@dataclass
class EncoderPyramid:
    """Bottleneck feature at 1/32 resolution plus skips from 1/16 up to 1/2."""

    bottleneck: torch.Tensor
    skips: list[torch.Tensor]
    input_size: tuple[int, int]


@dataclass
class NetworkOutput:
    """Forward-pass results; heads absent from the variant are None."""

    g_hat: torch.Tensor | None
    n_hat: torch.Tensor | None
    m_hat: torch.Tensor | None
    mu_hat: torch.Tensor | None


def fuse(a: torch.Tensor, b: torch.Tensor, w_a: float = 1.0, w_b: float = 1.0):
    """Weighted elementwise addition of two feature maps."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"cannot fuse {tuple(a.shape)} with {tuple(b.shape)}")
    return w_a * a + w_b * b


class Encoder(nn.Module):
    """Five stride-2 stages producing a 1/2 ... 1/32 feature pyramid."""

    def __init__(self, channels: tuple[int, ...]):
        super().__init__()
        widths = (3,) + tuple(channels)
        self.stages = nn.ModuleList(
            EncoderStage(widths[i], widths[i + 1]) for i in range(5)
        )

    def forward(self, image: torch.Tensor) -> EncoderPyramid:
        feats = []
        x = image
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return EncoderPyramid(
            bottleneck=feats[4],
            skips=[feats[3], feats[2], feats[1], feats[0]],
            input_size=tuple(image.shape[-2:]),
        )


class Decoder(nn.Module):
    """Five upsampling blocks with per-stage skip adaptation.

    Skips are projected and channel-attended per decoder, then added
    after each bilinear upsampling. Fusion features from the upstream
    decoder, when given, are weighted-added to the running feature before
    each of the first four blocks. The running (pre-fusion) features are
    returned so the next decoder can fuse them in turn.
    """

    def __init__(
        self,
        encoder_channels: tuple[int, ...],
        decoder_channels: tuple[int, ...],
        out_channels: int,
        se_reduction: int,
        fusion_weights: tuple[float, float],
        mdr: MDRBlock | None = None,
    ):
        super().__init__()
        dec = decoder_channels
        skip_sources = (encoder_channels[3], encoder_channels[2],
                        encoder_channels[1], encoder_channels[0])
        self.fusion_weights = fusion_weights
        self.bottleneck_adapter = SkipAdapter(encoder_channels[4], dec[0], se_reduction)
        self.skip_adapters = nn.ModuleList(
            SkipAdapter(skip_sources[i], dec[i], se_reduction) for i in range(4)
        )
        block_in = [dec[0], dec[1], dec[2], dec[3],
                    mdr.out_channels if mdr is not None else dec[4]]
        block_out = [dec[1], dec[2], dec[3], dec[4], dec[4]]
        self.blocks = nn.ModuleList(
            UpsampleBlock(block_in[i], block_out[i]) for i in range(5)
        )
        self.mdr = mdr
        self.head = nn.Conv2d(dec[4], out_channels, kernel_size=3, padding=1)

    def forward(self, pyramid: EncoderPyramid, fused_inputs=None):
        if fused_inputs is not None and len(fused_inputs) != 4:
            raise ShapeMismatchError("expected one fusion feature per fusion point (4)")
        w_up, w_self = self.fusion_weights
        x = self.bottleneck_adapter(pyramid.bottleneck)
        running = []
        mu_hat = None
        for i, block in enumerate(self.blocks):
            if i < 4:
                running.append(x)
                if fused_inputs is not None:
                    x = fuse(fused_inputs[i], x, w_up, w_self)
                skip = self.skip_adapters[i](pyramid.skips[i])
                size = tuple(pyramid.skips[i].shape[-2:])
            else:
                if self.mdr is not None:
                    x, mu_hat = self.mdr(x)
                skip = None
                size = pyramid.input_size
            x = block(x, size, skip)
        return self.head(x), running, mu_hat


class DepthDecompositionNet(nn.Module):
    """The full three-decoder network.

    Initialization is drawn from an explicit generator seeded by the
    config, so construction is bitwise reproducible.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.encoder_channels)

        def make_decoder(out_channels, mdr=None):
            return Decoder(
                cfg.encoder_channels,
                cfg.decoder_channels,
                out_channels,
                cfg.se_reduction,
                cfg.fusion_weights,
                mdr=mdr,
            )

        self.g_decoder = make_decoder(2) if cfg.with_gnet else None
        self.n_decoder = make_decoder(1) if cfg.with_nnet else None
        mdr = None
        if cfg.with_mdr:
            mdr = MDRBlock(cfg.decoder_channels[4], cfg.mdr_input_size, cfg.mdr)
        self.m_decoder = make_decoder(1, mdr=mdr)
        init_parameters(self, torch.Generator().manual_seed(cfg.seed))

    def encode(self, image: torch.Tensor) -> EncoderPyramid:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeMismatchError(
                f"expected a (B, 3, H, W) image, got {tuple(image.shape)}"
            )
        if tuple(image.shape[-2:]) != self.cfg.input_size:
            raise ShapeMismatchError(
                f"image {tuple(image.shape[-2:])} does not match "
                f"configured input size {self.cfg.input_size}"
            )
        return self.encoder(image)

    def _get_decoder(self, decoder_id: str) -> Decoder:
        decoders = {"G": self.g_decoder, "N": self.n_decoder, "M": self.m_decoder}
        if decoder_id not in decoders:
            raise UnknownDecoderError(f"unknown decoder {decoder_id!r}")
        dec = decoders[decoder_id]
        if dec is None:
            raise UnknownDecoderError(f"decoder {decoder_id!r} absent from this variant")
        return dec

    def adapt_skip(self, feature: torch.Tensor, decoder_id: str, stage: int):
        """Apply one decoder's skip adaptation (1x1 projection + channel attention)."""
        return self._get_decoder(decoder_id).skip_adapters[stage](feature)

    def forward(self, image: torch.Tensor, with_m: bool = True) -> NetworkOutput:
        pyramid = self.encode(image)
        g_hat = n_hat = m_hat = mu_hat = None
        g_feats = n_feats = None
        if self.g_decoder is not None:
            g_hat, g_feats, _ = self.g_decoder(pyramid)
        if self.n_decoder is not None:
            n_hat, n_feats, _ = self.n_decoder(pyramid, g_feats)
        if with_m:
            m_head, _, mu = self.m_decoder(pyramid, n_feats)
            if mu is not None and self.cfg.mdr_mu_enabled:
                m_head = m_head + mu.view(-1, 1, 1, 1)
                mu_hat = mu
            m_hat = torch.sigmoid(m_head)
        return NetworkOutput(g_hat=g_hat, n_hat=n_hat, m_hat=m_hat, mu_hat=mu_hat)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
