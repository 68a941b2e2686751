"""Model variants for the baseline/ablation comparisons.

The baseline is a bare encoder + metric decoder (no auxiliary decoders,
no attention block) trained single-phase on the metric loss terms only.
Ablation variants add the normalized decoder, the gradient decoder, the
attention block without mean regression (mdr_star), the full attention
block, and finally relative-only training data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import UnknownVariantError
from ..model.config import ModelConfig
from ..model.network import DepthDecompositionNet


@dataclass(frozen=True)
class Variant:
    name: str
    with_gnet: bool
    with_nnet: bool
    with_mdr: bool
    mdr_mu_enabled: bool
    uses_relative: bool

    @property
    def supports_two_phase(self) -> bool:
        """Phase 1 pretrains the auxiliary decoders; pointless without them."""
        return self.with_nnet


VARIANTS = {
    "baseline": Variant("baseline", False, False, False, False, False),
    "m_n": Variant("m_n", False, True, False, False, False),
    "m_n_g": Variant("m_n_g", True, True, False, False, False),
    "m_n_g_mdr_star": Variant("m_n_g_mdr_star", True, True, True, False, False),
    "proposed": Variant("proposed", True, True, True, True, False),
    "proposed_plus_relative": Variant(
        "proposed_plus_relative", True, True, True, True, True
    ),
}


def get_variant(name) -> Variant:
    if isinstance(name, Variant):
        return name
    if name not in VARIANTS:
        raise UnknownVariantError(
            f"unknown variant {name!r}; choose from {sorted(VARIANTS)}"
        )
    return VARIANTS[name]


def variant_model_config(variant, base: ModelConfig) -> ModelConfig:
    v = get_variant(variant)
    return replace(
        base,
        with_gnet=v.with_gnet,
        with_nnet=v.with_nnet,
        with_mdr=v.with_mdr,
        mdr_mu_enabled=v.mdr_mu_enabled,
    )


def build_variant(variant, base: ModelConfig) -> DepthDecompositionNet:
    """Construct the network for a named variant from a base configuration."""
    return DepthDecompositionNet(variant_model_config(variant, base))
