from .dataset import (
    DatasetConfig,
    ManifestRecord,
    Sample,
    build_dataset,
    load_manifest,
    load_sample,
    load_split,
    make_sample,
    manifest_digest,
    split_counts,
)
from .rasters import (
    load_depth_raster,
    load_depth_raster_auto,
    load_image_png,
    load_png16mm,
    load_rawf32,
    save_image_png,
    save_png16mm,
    save_rawf32,
)
from .scene import Box, Camera, Plane, SceneSpec, random_scene, render_scene

__all__ = [
    "Box",
    "Camera",
    "DatasetConfig",
    "ManifestRecord",
    "Plane",
    "Sample",
    "SceneSpec",
    "build_dataset",
    "load_depth_raster",
    "load_depth_raster_auto",
    "load_image_png",
    "load_manifest",
    "load_png16mm",
    "load_rawf32",
    "load_sample",
    "load_split",
    "make_sample",
    "manifest_digest",
    "random_scene",
    "render_scene",
    "save_image_png",
    "save_png16mm",
    "save_rawf32",
    "split_counts",
]
