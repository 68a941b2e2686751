"""Two-phase training loop with validation, logging, and checkpoints.

Everything is deterministic given (seed, config, manifest): model
initialization draws from the config seed, per-epoch shuffles from
(seed, phase, epoch), and all file outputs are canonical. Timestamps
appear only in the log header record.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from ..decomposition import uninvert_depth
from ..errors import EmptyDatasetError, MissingPhase1Error
from ..losses import LossConfig, LossTargets, total_loss
from ..metrics import EvalProtocol, MetricReport, compute_report, mean_report
from ..model.checkpoint import load_model, save_checkpoint
from ..model.config import ModelConfig
from ..model.network import DepthDecompositionNet
from .config import PhaseConfig, TrainConfig, lr_at_epoch
from .variants import get_variant, variant_model_config

PHASE1 = "phase1"
PHASE2 = "phase2"
SINGLE = "single"


@dataclass
class SampleTensors:
    """All samples of a split stacked into float32 tensors."""

    images: torch.Tensor
    n: torch.Tensor
    n_valid: torch.Tensor
    gx: torch.Tensor
    gy: torch.Tensor
    grad_valid: torch.Tensor
    m: torch.Tensor
    m_valid: torch.Tensor
    mu: torch.Tensor
    has_metric: torch.Tensor

    def __len__(self) -> int:
        return self.images.shape[0]


def stack_samples(samples) -> SampleTensors:
    """Stack a list of samples; metric rows of relative-only samples are zero."""
    if not samples:
        raise EmptyDatasetError("no samples to train on")
    h, w = samples[0].normalized.shape

    def zeros():
        return np.zeros((h, w), dtype=np.float32)

    images = np.stack([s.image.transpose(2, 0, 1) for s in samples])
    n = np.stack([s.normalized.data.astype(np.float32) for s in samples])
    n_valid = np.stack([s.normalized.valid_mask for s in samples])
    gx = np.stack([s.gradients.gx.astype(np.float32) for s in samples])
    gy = np.stack([s.gradients.gy.astype(np.float32) for s in samples])
    grad_valid = np.stack([s.gradients.valid_mask for s in samples])
    m = np.stack(
        [s.metric.data.astype(np.float32) if s.metric is not None else zeros()
         for s in samples]
    )
    m_valid = np.stack(
        [s.metric.valid_mask if s.metric is not None else np.zeros((h, w), dtype=bool)
         for s in samples]
    )
    mu = np.array(
        [s.normalized.origin_stats.mean if s.normalized.origin_stats is not None
         else 0.0 for s in samples],
        dtype=np.float32,
    )
    has_metric = np.array([s.has_metric_label for s in samples])
    return SampleTensors(
        images=torch.from_numpy(images),
        n=torch.from_numpy(n),
        n_valid=torch.from_numpy(n_valid),
        gx=torch.from_numpy(gx),
        gy=torch.from_numpy(gy),
        grad_valid=torch.from_numpy(grad_valid),
        m=torch.from_numpy(m),
        m_valid=torch.from_numpy(m_valid),
        mu=torch.from_numpy(mu),
        has_metric=torch.from_numpy(has_metric),
    )


def _batch_targets(tensors: SampleTensors, idx: torch.Tensor) -> LossTargets:
    return LossTargets(
        gx=tensors.gx[idx],
        gy=tensors.gy[idx],
        grad_valid=tensors.grad_valid[idx],
        n=tensors.n[idx],
        n_valid=tensors.n_valid[idx],
        m=tensors.m[idx],
        m_valid=tensors.m_valid[idx],
        mu=tensors.mu[idx],
    )


def _epoch_rng(seed: int, phase: str, epoch: int) -> np.random.Generator:
    phase_id = {PHASE1: 1, PHASE2: 2, SINGLE: 3}[phase]
    return np.random.default_rng(np.random.SeedSequence((seed, phase_id, epoch)))


def train_one_epoch(
    model: DepthDecompositionNet,
    tensors: SampleTensors,
    optimizer: torch.optim.Optimizer,
    loss_cfg: LossConfig,
    *,
    with_m: bool,
    batch_size: int,
    shuffle_rng: np.random.Generator,
) -> dict[str, float]:
    """One pass over the data; returns step-averaged term values."""
    model.train()
    order = shuffle_rng.permutation(len(tensors))
    sums: dict[str, float] = {}
    steps = 0
    for start in range(0, len(order), batch_size):
        idx = torch.from_numpy(order[start : start + batch_size].copy())
        output = model(tensors.images[idx], with_m=with_m)
        flags = tensors.has_metric[idx] if with_m else False
        loss, breakdown = total_loss(output, _batch_targets(tensors, idx),
                                     loss_cfg, flags)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        breakdown["total"] = float(loss.detach())
        for name, value in breakdown.items():
            sums[name] = sums.get(name, 0.0) + value
        steps += 1
    return {name: value / steps for name, value in sums.items()}


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def phase1_parameters(model: DepthDecompositionNet):
    """Encoder plus auxiliary decoders; the metric branch stays untouched."""
    modules = [model.encoder, model.g_decoder, model.n_decoder]
    params = []
    for mod in modules:
        if mod is not None:
            params.extend(mod.parameters())
    return params


def train_phase(
    model: DepthDecompositionNet,
    tensors: SampleTensors,
    phase_cfg: PhaseConfig,
    cfg: TrainConfig,
    phase: str,
    *,
    start_epoch: int = 1,
    on_epoch=None,
) -> list[dict]:
    """Run one phase; phase1 optimizes the metric-free subset of parameters."""
    if len(tensors) == 0:
        raise EmptyDatasetError("no samples to train on")
    with_m = phase != PHASE1
    params = phase1_parameters(model) if phase == PHASE1 else list(model.parameters())
    optimizer = torch.optim.Adam(params, lr=phase_cfg.lr,
                                 weight_decay=cfg.weight_decay)
    history = []
    for epoch in range(start_epoch, phase_cfg.epochs + 1):
        lr = lr_at_epoch(phase_cfg, epoch)
        _set_lr(optimizer, lr)
        stats = train_one_epoch(
            model,
            tensors,
            optimizer,
            cfg.loss,
            with_m=with_m,
            batch_size=cfg.batch_size,
            shuffle_rng=_epoch_rng(cfg.seed, phase, epoch),
        )
        record = {"phase": phase, "epoch": epoch, "lr": lr, "train": stats}
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return history


def train_phase1(model, samples, cfg: TrainConfig, on_epoch=None) -> list[dict]:
    """Phase 1: gradient/normalized supervision only, metric branch frozen."""
    return train_phase(model, stack_samples(samples), cfg.phase1, cfg, PHASE1,
                       on_epoch=on_epoch)


def train_phase2(model, samples, cfg: TrainConfig, on_epoch=None) -> list[dict]:
    """Phase 2: all parameters, metric terms masked off relative-only samples."""
    return train_phase(model, stack_samples(samples), cfg.phase2, cfg, PHASE2,
                       on_epoch=on_epoch)


# -- experiment orchestration -------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything a reproducible experiment needs."""

    dataset_dir: str
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    protocol: EvalProtocol = field(default_factory=EvalProtocol)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.protocol, dict):
            self.protocol = EvalProtocol(**self.protocol)


def evaluate_samples(
    model: DepthDecompositionNet,
    tensors: SampleTensors,
    samples,
    protocol: EvalProtocol,
    batch_size: int = 16,
) -> tuple[list[MetricReport], MetricReport]:
    """Original-space metric reports for every sample plus their mean."""
    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(tensors), batch_size):
            out = model(tensors.images[start : start + batch_size])
            preds.append(out.m_hat[:, 0].double().numpy())
    pred_inverted = np.concatenate(preds, axis=0)

    reports = []
    for i, sample in enumerate(samples):
        gt = uninvert_depth(sample.metric)
        inv = np.clip(pred_inverted[i], 1e-6, 1.0)
        pred_original = 1.0 / inv - 1.0
        reports.append(
            compute_report(pred_original, gt.data, gt.valid_mask, protocol)
        )
    return reports, mean_report(reports)


class _JsonlLogger:
    def __init__(self, path: Path, append: bool):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not append:
            self.path.unlink(missing_ok=True)

    def write(self, record: dict) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def run_experiment(exp: ExperimentConfig, out_dir, resume: bool = False) -> dict:
    """Train a variant per its schedule, validate per epoch, evaluate on test.

    Writes checkpoints (last / best-by-validation-RMSE / phase1 / final),
    a line-delimited training log, the resolved config, and the final
    test report into out_dir. With resume=True, continues a previous run
    from its last checkpoint; the epoch-indexed schedule guarantees the
    same learning-rate sequence.
    """
    from ..data.dataset import load_split

    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    variant = get_variant(exp.train.variant)
    model_cfg = replace(
        variant_model_config(variant, exp.model), seed=exp.train.seed
    )

    train_samples = load_split(exp.dataset_dir, "train")
    if not variant.with_nnet or not variant.uses_relative:
        # variants without relative-data support train on metric labels only
        train_samples = [s for s in train_samples if s.has_metric_label]
    val_samples = load_split(exp.dataset_dir, "val")
    test_samples = load_split(exp.dataset_dir, "test")
    if not train_samples:
        raise EmptyDatasetError(f"no usable training samples in {exp.dataset_dir}")

    train_tensors = stack_samples(train_samples)
    val_tensors = stack_samples(val_samples)
    test_tensors = stack_samples(test_samples)

    two_phase = variant.supports_two_phase and not exp.train.single_phase

    start_phase, start_epoch = (PHASE1 if two_phase else SINGLE), 1
    best_rmse = float("inf")
    last_path = ckpt_dir / "last.ckpt"
    if resume and last_path.is_file():
        model, extra = load_model(last_path, expected_config=model_cfg)
        start_phase = extra["phase"]
        start_epoch = extra["epoch"] + 1
        best_rmse = extra.get("best_rmse", float("inf"))
        if start_phase == PHASE2 and not (ckpt_dir / "phase1.ckpt").is_file():
            raise MissingPhase1Error("resuming phase 2 without a phase-1 checkpoint")
    else:
        resume = False
        model = DepthDecompositionNet(model_cfg)

    log = _JsonlLogger(out_dir / "train_log.jsonl", append=resume)
    if not resume:
        log.write(
            {
                "type": "header",
                "variant": variant.name,
                "seed": exp.train.seed,
                "two_phase": two_phase,
                "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
            }
        )
        (out_dir / "experiment_config.json").write_text(
            json.dumps(asdict(exp), sort_keys=True, indent=2, default=str) + "\n"
        )

    def save(name: str, phase: str, epoch: int):
        save_checkpoint(
            ckpt_dir / name,
            model,
            extra={"phase": phase, "epoch": epoch, "best_rmse": best_rmse},
        )

    def run_phase(phase: str, phase_cfg: PhaseConfig, first_epoch: int):
        nonlocal best_rmse

        def on_epoch(record):
            nonlocal best_rmse
            entry = {"type": "epoch", **record}
            if phase != PHASE1:
                _, summary = evaluate_samples(
                    model, val_tensors, val_samples, exp.protocol
                )
                entry["val"] = summary.as_dict()
                if summary.rmse < best_rmse:
                    best_rmse = summary.rmse
                    save("best.ckpt", phase, record["epoch"])
            log.write(entry)
            save("last.ckpt", phase, record["epoch"])

        train_phase(
            model,
            train_tensors,
            phase_cfg,
            exp.train,
            phase,
            start_epoch=first_epoch,
            on_epoch=on_epoch,
        )

    if two_phase:
        p1 = exp.train.phase1
        if start_phase == PHASE1:
            if start_epoch <= p1.epochs:
                run_phase(PHASE1, p1, start_epoch)
            save("phase1.ckpt", PHASE1, p1.epochs)
            start_phase, start_epoch = PHASE2, 1
        run_phase(PHASE2, exp.train.phase2, start_epoch)
        final_phase, final_epoch = PHASE2, exp.train.phase2.epochs
    else:
        # single-phase: skip phase 1 and train everything on the phase-2 schedule
        run_phase(SINGLE, exp.train.phase2, start_epoch)
        final_phase, final_epoch = SINGLE, exp.train.phase2.epochs

    save("final.ckpt", final_phase, final_epoch)
    if not (ckpt_dir / "best.ckpt").is_file():
        save("best.ckpt", final_phase, final_epoch)

    best_model, _ = load_model(ckpt_dir / "best.ckpt")
    _, test_summary = evaluate_samples(
        best_model, test_tensors, test_samples, exp.protocol
    )
    final_report = {
        "variant": variant.name,
        "seed": exp.train.seed,
        "two_phase": two_phase,
        "best_val_rmse": best_rmse,
        "test": test_summary.as_dict(),
    }
    (out_dir / "final_report.json").write_text(
        json.dumps(final_report, sort_keys=True, indent=2) + "\n"
    )
    return {
        "out_dir": out_dir,
        "best_checkpoint": ckpt_dir / "best.ckpt",
        "final_checkpoint": ckpt_dir / "final.ckpt",
        "final_report": final_report,
    }
