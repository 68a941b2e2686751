"""Command-line interface.

Subcommands: gen-data, train, eval, predict, decompose, report. Settings
come from an optional YAML config file with sections (data, model,
train, protocol, dataset_dir), overridden by repeatable --override
key=value flags (CLI > file > defaults). DEPTHDECOMP_THREADS caps
internal parallelism.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch
import yaml

from .data.dataset import (
    DatasetConfig,
    build_dataset,
    load_manifest,
    load_sample,
    manifest_digest,
)
from .data.rasters import (
    load_depth_raster_auto,
    load_image_png,
    save_rawf32,
)
from .decomposition import spatial_gradients, znormalize
from .errors import ConfigError, DepthDecompError, MissingCheckpointError
from .losses import LossConfig
from .metrics import (
    PROTOCOL_PRESETS,
    EvalProtocol,
    evaluate_corpus,
    write_report_file,
)
from .model.checkpoint import load_model
from .model.config import ModelConfig
from .training.config import TrainConfig
from .training.loop import ExperimentConfig, run_experiment
from .viz import save_colorized_png, save_error_map_png

SECTIONS = ("data", "model", "train", "protocol")


def _apply_thread_cap() -> None:
    value = os.environ.get("DEPTHDECOMP_THREADS")
    if value:
        try:
            threads = max(1, int(value))
        except ValueError:
            raise ConfigError(f"DEPTHDECOMP_THREADS={value!r} is not an integer")
        torch.set_num_threads(threads)


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return key.strip(), value


def _section_fields(section: str) -> set[str]:
    cls = {
        "data": DatasetConfig,
        "model": ModelConfig,
        "train": TrainConfig,
        "protocol": EvalProtocol,
    }[section]
    return {f.name for f in dataclasses.fields(cls)}


def _set_nested(config: dict, key: str, value) -> None:
    parts = key.split(".")
    if len(parts) == 1 and parts[0] not in SECTIONS and parts[0] != "dataset_dir":
        # bare field name: find the unique section owning it
        owners = [s for s in SECTIONS if parts[0] in _section_fields(s)]
        if len(owners) == 1:
            parts = [owners[0], parts[0]]
        elif not owners:
            raise ConfigError(f"override key {key!r} matches no config field")
        else:
            raise ConfigError(
                f"override key {key!r} is ambiguous across sections {owners}; "
                "qualify it, e.g. data.seed"
            )
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-mapping")
    node[parts[-1]] = value


def load_config(args) -> dict:
    """Merge config file, --override flags, and shorthand flags."""
    config: dict = {}
    path = getattr(args, "config", None)
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        loaded = yaml.safe_load(path.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        config.update(loaded)
    for item in getattr(args, "override", None) or []:
        key, value = _parse_override(item)
        _set_nested(config, key, value)
    if getattr(args, "seed", None) is not None:
        for section in ("data", "model", "train"):
            config.setdefault(section, {})["seed"] = args.seed
    if getattr(args, "variant", None):
        config.setdefault("train", {})["variant"] = args.variant
    if getattr(args, "protocol", None):
        config["protocol"] = args.protocol
    if getattr(args, "data_dir", None):
        config["dataset_dir"] = args.data_dir
    return config


def _build_section(config: dict, section: str):
    raw = dict(config.get(section) or {})
    try:
        if section == "data":
            return DatasetConfig(**raw)
        if section == "model":
            return ModelConfig.from_dict(raw)
        if section == "train":
            return TrainConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad {section} config: {exc}") from exc
    raise ConfigError(f"unknown section {section}")


def _build_protocol(config: dict) -> EvalProtocol:
    raw = config.get("protocol", "synthetic")
    if isinstance(raw, str):
        if raw not in PROTOCOL_PRESETS:
            raise ConfigError(
                f"unknown protocol {raw!r}; presets: {sorted(PROTOCOL_PRESETS)}"
            )
        return PROTOCOL_PRESETS[raw]
    if isinstance(raw, dict):
        if "crop_fractions" in raw and raw["crop_fractions"] is not None:
            raw["crop_fractions"] = tuple(raw["crop_fractions"])
        try:
            return EvalProtocol(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad protocol config: {exc}") from exc
    raise ConfigError("protocol must be a preset name or a mapping")


def _require_dataset_dir(config: dict) -> Path:
    value = config.get("dataset_dir")
    if not value:
        raise ConfigError("a dataset directory is required (--data or dataset_dir)")
    return Path(value)


def _inverted_to_meters(inverted: np.ndarray) -> np.ndarray:
    # keep strictly inside (0, 1) so meters stay positive and serializable
    return 1.0 / np.clip(inverted, 1e-6, 1.0 - 1e-7) - 1.0


# -- commands ------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = load_config(args)
    cfg = _build_section(config, "data")
    result = build_dataset(cfg, args.out)
    for split, path in result["manifests"].items():
        print(f"{split}: {result['counts'][split]} samples "
              f"(sha256 {manifest_digest(path)[:16]})")
    print(f"dataset written to {result['out_dir']}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args)
    exp = ExperimentConfig(
        dataset_dir=str(_require_dataset_dir(config)),
        model=_build_section(config, "model"),
        train=_build_section(config, "train"),
        protocol=_build_protocol(config),
    )
    bundle = run_experiment(exp, args.out, resume=args.resume)
    report = bundle["final_report"]
    print(f"variant {report['variant']} seed {report['seed']}: "
          f"test RMSE {report['test']['rmse']:.4f} "
          f"tau {report['test']['kendall_tau']:.4f}")
    print(f"bundle written to {bundle['out_dir']}")
    return 0


def _predict_split_rasters(model, dataset_dir: Path, split: str, out_dir: Path):
    records = load_manifest(dataset_dir / f"{split}.jsonl")
    pred_dir = out_dir / "preds"
    gt_dir = out_dir / "gt"
    for record in records:
        sample = load_sample(dataset_dir, record)
        image = torch.from_numpy(
            sample.image.transpose(2, 0, 1)[None].astype(np.float32)
        )
        with torch.no_grad():
            out = model(image)
        meters = _inverted_to_meters(out.m_hat[0, 0].double().numpy())
        save_rawf32(pred_dir / f"{record.source_id}.raw", meters)
        gt = load_depth_raster_auto(dataset_dir / record.depth)
        save_rawf32(gt_dir / f"{record.source_id}.raw", gt.data, gt.valid_mask)
    return pred_dir, gt_dir


def cmd_eval(args) -> int:
    config = load_config(args)
    protocol = _build_protocol(config)
    out_dir = Path(args.out)
    if args.checkpoint:
        model, _ = load_model(args.checkpoint)
        dataset_dir = _require_dataset_dir(config)
        pred_dir, gt_dir = _predict_split_rasters(
            model, dataset_dir, args.split, out_dir
        )
    elif args.pred_dir and args.gt_dir:
        pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    else:
        raise ConfigError("eval needs either --checkpoint with --data, "
                          "or --pred-dir with --gt-dir")
    per_image, summary = evaluate_corpus(pred_dir, gt_dir, protocol)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_file(out_dir / "report.jsonl", per_image, summary)
    print(f"{len(per_image)} images: RMSE {summary.rmse:.4f} REL {summary.rel:.4f} "
          f"tau {summary.kendall_tau:.4f} whdr {summary.whdr:.4f}")
    return 0


def cmd_predict(args) -> int:
    if not args.checkpoint:
        raise MissingCheckpointError("predict needs --checkpoint")
    model, _ = load_model(args.checkpoint)
    image = load_image_png(args.image)
    tensor = torch.from_numpy(image.transpose(2, 0, 1)[None].astype(np.float32))
    with torch.no_grad():
        out = model(tensor)
    out_dir = Path(args.out)
    mhat = _inverted_to_meters(out.m_hat[0, 0].double().numpy())
    save_rawf32(out_dir / "mhat.raw", mhat)
    save_colorized_png(out_dir / "mhat.png", mhat)
    if out.n_hat is not None:
        nhat = out.n_hat[0, 0].double().numpy()
        save_rawf32(out_dir / "nhat.raw", nhat)
        save_colorized_png(out_dir / "nhat.png", nhat)
    if out.g_hat is not None:
        for channel, name in ((0, "ghat_x"), (1, "ghat_y")):
            g = out.g_hat[0, channel].double().numpy()
            save_rawf32(out_dir / f"{name}.raw", g)
            save_colorized_png(out_dir / f"{name}.png", g)
    if args.gt:
        gt = load_depth_raster_auto(args.gt)
        save_error_map_png(out_dir / "error_map.png", mhat, gt.data, gt.valid_mask)
    print(f"predictions written to {out_dir}")
    return 0


def cmd_decompose(args) -> int:
    depth = load_depth_raster_auto(args.depth)
    normalized, stats = znormalize(depth)
    grads = spatial_gradients(normalized.data, normalized.valid_mask)
    out_dir = Path(args.out)
    save_rawf32(out_dir / "n.raw", normalized.data, normalized.valid_mask)
    save_rawf32(out_dir / "gx.raw", grads.gx)
    save_rawf32(out_dir / "gy.raw", grads.gy)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "stats.json").write_text(
        json.dumps({"mean": stats.mean, "std": stats.std}, sort_keys=True) + "\n"
    )
    save_colorized_png(out_dir / "n.png", normalized.data, normalized.valid_mask)
    print(f"decomposition written to {out_dir} "
          f"(mean {stats.mean:.6g}, std {stats.std:.6g})")
    return 0


def cmd_report(args) -> int:
    rows = []
    for bundle in args.bundles:
        report_path = Path(bundle) / "final_report.json"
        if not report_path.is_file():
            raise MissingCheckpointError(f"{bundle} has no final_report.json")
        rows.append(json.loads(report_path.read_text()))
    rows.sort(key=lambda r: r["test"]["rmse"])

    header = (f"{'variant':<24} {'seed':>4} {'RMSE':>8} {'REL':>8} {'log10':>8} "
              f"{'d1':>7} {'d2':>7} {'d3':>7} {'tau':>7} {'WHDR':>7}")
    lines = [header, "-" * len(header)]
    for r in rows:
        t = r["test"]
        lines.append(
            f"{r['variant']:<24} {r['seed']:>4} {t['rmse']:>8.4f} {t['rel']:>8.4f} "
            f"{t['log10']:>8.4f} {t['delta'][0]:>7.4f} {t['delta'][1]:>7.4f} "
            f"{t['delta'][2]:>7.4f} {t['kendall_tau']:>7.4f} {t['whdr']:>7.4f}"
        )
    table = "\n".join(lines) + "\n"
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "table.txt").write_text(table)
    (out_dir / "reports.json").write_text(
        json.dumps(rows, sort_keys=True, indent=2) + "\n"
    )
    _plot_curves(args.bundles, out_dir / "curves.png")
    print(table, end="")
    return 0


def _plot_curves(bundles, path) -> None:
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for bundle in bundles:
        log_path = Path(bundle) / "train_log.jsonl"
        if not log_path.is_file():
            continue
        epochs, rmses = [], []
        for line in log_path.read_text().splitlines():
            record = json.loads(line)
            if record.get("type") == "epoch" and "val" in record:
                epochs.append(len(epochs) + 1)
                rmses.append(record["val"]["rmse"])
        if epochs:
            ax.plot(epochs, rmses, marker="o", label=Path(bundle).name)
    ax.set_xlabel("validated epoch")
    ax.set_ylabel("val RMSE (m)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthdecomp",
        description="Depth-map decomposition: data generation, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--override", action="append", metavar="K=V",
                       help="config override, repeatable (e.g. data.seed=3)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="seed for data/model/train")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run a training experiment")
    common(p)
    p.add_argument("--data", dest="data_dir", help="dataset directory")
    p.add_argument("--variant", help="model variant name")
    p.add_argument("--protocol", help="evaluation protocol preset")
    p.add_argument("--resume", action="store_true",
                   help="continue from the last checkpoint in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint to evaluate")
    p.add_argument("--data", dest="data_dir", help="dataset directory")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--pred-dir", help="directory of prediction rasters")
    p.add_argument("--gt-dir", help="directory of ground-truth rasters")
    p.add_argument("--protocol", help="evaluation protocol preset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict depth maps for one image")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--image", required=True, help="input RGB PNG")
    p.add_argument("--gt", help="optional ground-truth raster for an error map")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("decompose", help="decompose a metric depth raster")
    common(p)
    p.add_argument("--depth", required=True, help="input depth raster")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("report", help="tabulate experiment bundles")
    common(p)
    p.add_argument("bundles", nargs="+", help="experiment output directories")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except DepthDecompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
