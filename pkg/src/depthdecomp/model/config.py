"""Network configuration.

All dimensions are configurable; named constructors provide the
full-scale geometry (384x512 input, 192 attention tokens of 128 dims)
and the desk-scale defaults used for experiments and tests.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ConfigError, PatchMismatchError


@dataclass
class MDRConfig:
    """Mean-depth-residual block: patchwise attention plus mean regression."""

    patch_size: int = 8
    token_dim: int = 24
    num_transformer_layers: int = 2
    num_heads: int = 2
    mlp_ratio: float = 4.0

    def __post_init__(self):
        if self.patch_size < 1 or self.token_dim < 1:
            raise ConfigError("patch_size and token_dim must be positive")
        if self.token_dim % self.num_heads != 0:
            raise ConfigError("token_dim must be divisible by num_heads")


@dataclass
class ModelConfig:
    """Shared-encoder / three-decoder network dimensions.

    input_size is (height, width); both must be divisible by 16 so that
    five encoder halvings and the half-resolution attention input stay on
    integer grids. Component flags select the trained variant: the
    metric decoder is always present, the normalized-depth decoder is
    required by the gradient decoder, and mdr_mu_enabled gates the mean
    regression output of the attention block.
    """

    input_size: tuple[int, int] = (48, 64)
    encoder_channels: tuple[int, ...] = (8, 12, 16, 24, 32)
    decoder_channels: tuple[int, ...] = (32, 24, 20, 16, 12)
    fusion_weights: tuple[float, float] = (1.0, 1.0)
    mdr: MDRConfig = field(default_factory=MDRConfig)
    seed: int = 0
    with_gnet: bool = True
    with_nnet: bool = True
    with_mdr: bool = True
    mdr_mu_enabled: bool = True
    se_reduction: int = 4

    def __post_init__(self):
        if isinstance(self.mdr, dict):
            self.mdr = MDRConfig(**self.mdr)
        self.input_size = tuple(self.input_size)
        self.encoder_channels = tuple(self.encoder_channels)
        self.decoder_channels = tuple(self.decoder_channels)
        self.fusion_weights = tuple(self.fusion_weights)
        h, w = self.input_size
        if h % 16 != 0 or w % 16 != 0:
            raise ConfigError(f"input size {h}x{w} must be divisible by 16")
        if len(self.encoder_channels) != 5 or len(self.decoder_channels) != 5:
            raise ConfigError("encoder and decoder need 5 stage widths each")
        if any(not (x == x and abs(x) != float("inf")) for x in self.fusion_weights):
            raise ConfigError("fusion weights must be finite")
        if self.with_gnet and not self.with_nnet:
            raise ConfigError("the gradient decoder requires the normalized decoder")
        if self.with_mdr:
            fh, fw = self.mdr_input_size
            p = self.mdr.patch_size
            if fh % p != 0 or fw % p != 0:
                raise PatchMismatchError(
                    f"attention input {fh}x{fw} not divisible by patch {p}"
                )
            if self.mdr_tokens < 2:
                raise PatchMismatchError(
                    "need at least 2 tokens (one is reserved for mean regression)"
                )

    @property
    def mdr_input_size(self) -> tuple[int, int]:
        """Feature size after the fourth upsampling block: half resolution."""
        return (self.input_size[0] // 2, self.input_size[1] // 2)

    @property
    def mdr_tokens(self) -> int:
        fh, fw = self.mdr_input_size
        p = self.mdr.patch_size
        return (fh // p) * (fw // p)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if isinstance(d.get("mdr"), dict):
            d["mdr"] = MDRConfig(**d["mdr"])
        return cls(**d)


def toy_config(**overrides) -> ModelConfig:
    """Desk-scale default: 48x64 input, 12 tokens at half resolution."""
    return ModelConfig(**overrides)


def paper_scale_config() -> ModelConfig:
    """Full-scale geometry: 384x512 input, 16x12 bottleneck, 192 tokens.

    Channel widths approximate the published network; this configuration
    exists for geometry checks, not for training at desk scale.
    """
    return ModelConfig(
        input_size=(384, 512),
        encoder_channels=(24, 40, 64, 176, 2048),
        decoder_channels=(1024, 512, 256, 128, 64),
        mdr=MDRConfig(
            patch_size=16,
            token_dim=128,
            num_transformer_layers=4,
            num_heads=4,
            mlp_ratio=4.0,
        ),
        se_reduction=16,
    )


def tiny_config(**overrides) -> ModelConfig:
    """Minimal geometry for finite-difference gradient checks (< 5k params)."""
    defaults = dict(
        input_size=(16, 16),
        encoder_channels=(2, 2, 3, 3, 4),
        decoder_channels=(4, 4, 3, 3, 3),
        mdr=MDRConfig(
            patch_size=4,
            token_dim=4,
            num_transformer_layers=1,
            num_heads=2,
            mlp_ratio=1.0,
        ),
        se_reduction=2,
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)
