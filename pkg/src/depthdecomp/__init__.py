"""Metric depth decomposition.

Decomposes metric depth maps into normalized depth plus scale statistics
and gradient maps, estimates all three with cooperating decoders over a
shared encoder, trains in two phases on mixed metric and relative-only
data, and evaluates with error and rank-correlation metrics.
"""

from . import errors
from .decomposition import (
    INVERTED,
    ORIGINAL,
    GradientPair,
    MetricDepthMap,
    NormalizedDepthMap,
    ScaleStats,
    invert_depth,
    least_squares_scale_shift,
    reconstruct_direct,
    spatial_gradients,
    uninvert_depth,
    znormalize,
)

__version__ = "0.1.0"

__all__ = [
    "GradientPair",
    "INVERTED",
    "MetricDepthMap",
    "NormalizedDepthMap",
    "ORIGINAL",
    "ScaleStats",
    "errors",
    "invert_depth",
    "least_squares_scale_shift",
    "reconstruct_direct",
    "spatial_gradients",
    "uninvert_depth",
    "znormalize",
]
