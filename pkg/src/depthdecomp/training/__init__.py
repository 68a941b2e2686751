from .config import PhaseConfig, TrainConfig, lr_at_epoch
from .loop import (
    ExperimentConfig,
    evaluate_samples,
    run_experiment,
    stack_samples,
    train_phase1,
    train_phase2,
)
from .variants import VARIANTS, Variant, build_variant, get_variant, variant_model_config

__all__ = [
    "ExperimentConfig",
    "PhaseConfig",
    "TrainConfig",
    "VARIANTS",
    "Variant",
    "build_variant",
    "evaluate_samples",
    "get_variant",
    "lr_at_epoch",
    "run_experiment",
    "stack_samples",
    "train_phase1",
    "train_phase2",
    "variant_model_config",
]
