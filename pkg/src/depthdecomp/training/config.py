"""Training schedule configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError
from ..losses import LossConfig


@dataclass
class PhaseConfig:
    """One training phase: step-decayed learning rate over a fixed epoch count."""

    epochs: int
    lr: float
    decay_factor: float = 0.1
    decay_period: int = 5

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("a phase needs at least 1 epoch")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ConfigError("decay factor must lie in (0, 1]")
        if self.decay_period < 1:
            raise ConfigError("decay period must be at least 1 epoch")


def lr_at_epoch(phase: PhaseConfig, epoch: int) -> float:
    """Effective learning rate at a 1-based epoch: lr * factor^((epoch-1) // period)."""
    return phase.lr * phase.decay_factor ** ((epoch - 1) // phase.decay_period)


@dataclass
class TrainConfig:
    """Two-phase optimization settings.

    Phase 1 trains the encoder and the gradient/normalized decoders only;
    phase 2 trains everything. single_phase skips phase 1 and trains all
    modules on the phase-2 schedule; set phase2.epochs to the full budget
    when comparing against a two-phase run.
    """

    phase1: PhaseConfig = field(default_factory=lambda: PhaseConfig(20, 1e-4, 0.1, 5))
    phase2: PhaseConfig = field(default_factory=lambda: PhaseConfig(15, 1e-4, 0.1, 3))
    weight_decay: float = 1e-4
    batch_size: int = 8
    seed: int = 0
    variant: str = "proposed"
    single_phase: bool = False
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if isinstance(self.phase1, dict):
            self.phase1 = PhaseConfig(**self.phase1)
        if isinstance(self.phase2, dict):
            self.phase2 = PhaseConfig(**self.phase2)
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be nonnegative")
