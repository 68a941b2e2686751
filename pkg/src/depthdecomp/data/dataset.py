"""Sample construction and dataset generation.

A training sample bundles the RGB image with its supervision targets:
the inverted-space metric depth map (absent for relative-only data), the
z-score-normalized inverted depth, and forward-difference gradients of
the normalized map. Relative-only samples keep the normalized and
gradient targets but drop the metric map and its scale statistics,
mirroring disparity data whose absolute scale is unknown.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..decomposition import (
    GradientPair,
    MetricDepthMap,
    NormalizedDepthMap,
    invert_depth,
    spatial_gradients,
    znormalize,
)
from ..errors import InvalidSplitError, UnreadableFileError
from .rasters import load_image_png, load_rawf32, save_image_png, save_rawf32
from .scene import Camera, random_scene, render_scene


@dataclass
class Sample:
    """Image plus supervision targets for one scene."""

    image: np.ndarray
    normalized: NormalizedDepthMap
    gradients: GradientPair
    has_metric_label: bool
    source_id: str
    metric: MetricDepthMap | None = None


def make_sample(
    metric: MetricDepthMap, image: np.ndarray, relative_only: bool = False,
    source_id: str = "",
) -> Sample:
    """Build training targets from an original-space metric depth map.

    The depth is inverted to (0, 1], z-normalized over valid pixels, and
    differenced. With relative_only the metric map and the normalization
    statistics are dropped.
    """
    inverted = invert_depth(metric)
    normalized, _ = znormalize(inverted)
    gradients = spatial_gradients(normalized.data, normalized.valid_mask)
    if relative_only:
        normalized.origin_stats = None
        return Sample(
            image=image,
            normalized=normalized,
            gradients=gradients,
            has_metric_label=False,
            source_id=source_id,
        )
    return Sample(
        image=image,
        normalized=normalized,
        gradients=gradients,
        has_metric_label=True,
        source_id=source_id,
        metric=inverted,
    )


@dataclass
class DatasetConfig:
    """Synthetic dataset layout.

    relative_fraction converts that fraction of the base train scenes to
    relative-only supervision; extra_relative_scenes appends additional
    relative-only scenes (fresh seeds) on top of the base split, leaving
    the metric scenes and the val/test splits untouched.
    """

    num_scenes: int = 200
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    relative_fraction: float = 0.0
    extra_relative_scenes: int = 0
    image_size: tuple[int, int] = (48, 64)
    depth_range: tuple[float, float] = (0.5, 8.0)
    focal: float | None = None
    seed: int = 0

    def __post_init__(self):
        self.split = tuple(self.split)
        self.image_size = tuple(self.image_size)
        self.depth_range = tuple(self.depth_range)
        if self.num_scenes < 0 or self.extra_relative_scenes < 0:
            raise InvalidSplitError("scene counts must be nonnegative")
        if len(self.split) != 3 or any(s < 0 for s in self.split):
            raise InvalidSplitError(f"bad split {self.split}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise InvalidSplitError(f"split {self.split} does not sum to 1")
        if not 0.0 <= self.relative_fraction <= 1.0:
            raise InvalidSplitError("relative_fraction must lie in [0, 1]")

    def camera(self) -> Camera:
        h, w = self.image_size
        focal = self.focal if self.focal is not None else 0.9 * w
        return Camera.centered(w, h, focal)


@dataclass
class ManifestRecord:
    source_id: str
    image: str
    depth: str
    has_metric_label: bool
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "source_id": self.source_id,
                "image": self.image,
                "depth": self.depth,
                "has_metric_label": self.has_metric_label,
                "seed": self.seed,
            },
            sort_keys=True,
        )


SPLIT_NAMES = ("train", "val", "test")


def split_counts(num_scenes: int, split: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(round(num_scenes * split[0]))
    n_val = int(round(num_scenes * split[1]))
    n_val = min(n_val, num_scenes - n_train)
    return n_train, n_val, num_scenes - n_train - n_val


def build_dataset(cfg: DatasetConfig, out_dir) -> dict:
    """Render all scenes, write rasters, and emit per-split manifests.

    Scene seeds are cfg.seed + index with disjoint index ranges per
    split, so rebuilding with the same config is byte-identical and
    splits never share scenes.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "depths").mkdir(parents=True, exist_ok=True)
    camera = cfg.camera()

    n_train, n_val, n_test = split_counts(cfg.num_scenes, cfg.split)
    n_relative = int(round(cfg.relative_fraction * n_train))
    splits: dict[str, list[ManifestRecord]] = {name: [] for name in SPLIT_NAMES}

    def render_one(index: int, split_name: str, metric_labeled: bool):
        seed = cfg.seed + index
        spec = random_scene(camera, cfg.depth_range, seed)
        image, depth = render_scene(spec)
        source_id = f"scene{index:05d}"
        image_rel = f"images/{source_id}.png"
        depth_rel = f"depths/{source_id}.raw"
        save_image_png(out_dir / image_rel, image)
        save_rawf32(out_dir / depth_rel, depth.data, depth.valid_mask)
        splits[split_name].append(
            ManifestRecord(source_id, image_rel, depth_rel, metric_labeled, seed)
        )

    index = 0
    for i in range(n_train):
        # the trailing scenes of the train split become relative-only
        render_one(index, "train", metric_labeled=i < n_train - n_relative)
        index += 1
    for _ in range(n_val):
        render_one(index, "val", metric_labeled=True)
        index += 1
    for _ in range(n_test):
        render_one(index, "test", metric_labeled=True)
        index += 1
    for _ in range(cfg.extra_relative_scenes):
        render_one(index, "train", metric_labeled=False)
        index += 1

    manifest_paths = {}
    for name in SPLIT_NAMES:
        path = out_dir / f"{name}.jsonl"
        with path.open("w") as fh:
            for record in splits[name]:
                fh.write(record.to_json() + "\n")
        manifest_paths[name] = path

    return {
        "out_dir": out_dir,
        "manifests": manifest_paths,
        "counts": {name: len(splits[name]) for name in SPLIT_NAMES},
    }


def load_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"manifest {path} does not exist")
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        records.append(
            ManifestRecord(
                source_id=d["source_id"],
                image=d["image"],
                depth=d["depth"],
                has_metric_label=d["has_metric_label"],
                seed=d["seed"],
            )
        )
    return records


def load_sample(dataset_dir, record: ManifestRecord) -> Sample:
    dataset_dir = Path(dataset_dir)
    image = load_image_png(dataset_dir / record.image)
    depth = load_rawf32(dataset_dir / record.depth)
    return make_sample(
        depth,
        image,
        relative_only=not record.has_metric_label,
        source_id=record.source_id,
    )


def load_split(dataset_dir, split: str) -> list[Sample]:
    dataset_dir = Path(dataset_dir)
    records = load_manifest(dataset_dir / f"{split}.jsonl")
    return [load_sample(dataset_dir, rec) for rec in records]


def manifest_digest(path) -> str:
    """Hex digest of manifest bytes, used to verify deterministic rebuilds."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
