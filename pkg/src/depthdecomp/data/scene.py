"""Synthetic indoor-scene depth rendering.

A pinhole camera at the origin looking down +z ray-casts a set of
primitives (infinite planes and axis-aligned boxes). Depth follows the
z-depth convention (distance along the optical axis), which for rays
parameterized as t * (dx, dy, 1) is simply the hit parameter t. Shading
is Lambertian with per-primitive albedo so depth structure is visible in
the rendered image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..decomposition import ORIGINAL, MetricDepthMap
from ..errors import EmptySceneError

_LIGHT_DIR = np.array([0.35, -0.5, -0.79])
_AMBIENT = 0.25
# camera-mounted light falloff makes brightness encode distance, so
# absolute depth is visually inferable from a single image
_FALLOFF_SCALE = 3.0
_FALLOFF_POWER = 1.0
# sensor noise, matching the consumer-camera captures this stands in for
_NOISE_SIGMA = 0.02


@dataclass
class Camera:
    """Pinhole intrinsics: focal length and principal point in pixels."""

    focal: float
    cx: float
    cy: float
    width: int
    height: int

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> "Camera":
        return cls(focal=focal, cx=(width - 1) / 2, cy=(height - 1) / 2,
                   width=width, height=height)


@dataclass
class Plane:
    """Infinite plane through `point` with unit `normal`."""

    point: np.ndarray
    normal: np.ndarray
    albedo: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)


@dataclass
class Box:
    """Axis-aligned box spanning [lo, hi] per axis."""

    lo: np.ndarray
    hi: np.ndarray
    albedo: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)


@dataclass
class SceneSpec:
    camera: Camera
    primitives: list = field(default_factory=list)
    depth_range: tuple[float, float] = (0.5, 8.0)
    seed: int = 0


def _ray_grid(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ray x/y slopes for rays (dx, dy, 1)."""
    us = np.arange(camera.width, dtype=np.float64)
    vs = np.arange(camera.height, dtype=np.float64)
    dx = (us[None, :] - camera.cx) / camera.focal
    dy = (vs[:, None] - camera.cy) / camera.focal
    return np.broadcast_to(dx, (camera.height, camera.width)), np.broadcast_to(
        dy, (camera.height, camera.width)
    )


def _intersect_plane(plane: Plane, dx, dy):
    """Hit parameter t (z-depth) per pixel; inf where the ray misses."""
    denom = plane.normal[0] * dx + plane.normal[1] * dy + plane.normal[2]
    numer = float(plane.normal @ plane.point)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = numer / denom
    t = np.where((np.abs(denom) > 1e-12) & (t > 1e-9), t, np.inf)
    normals = np.broadcast_to(plane.normal, t.shape + (3,))
    return t, normals


def _intersect_box(box: Box, dx, dy):
    """Slab-method intersection; returns entry depth and entry-face normals."""
    shape = dx.shape
    dirs = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (box.lo - 0.0) / dirs
        t_hi = (box.hi - 0.0) / dirs
    t_near_axis = np.minimum(t_lo, t_hi)
    t_far_axis = np.maximum(t_lo, t_hi)
    # a zero direction component misses unless the origin is inside the slab
    zero_dir = np.abs(dirs) < 1e-15
    inside = (0.0 >= box.lo) & (0.0 <= box.hi)
    t_near_axis = np.where(zero_dir, np.where(inside, -np.inf, np.inf), t_near_axis)
    t_far_axis = np.where(zero_dir, np.where(inside, np.inf, -np.inf), t_far_axis)
    t_near = t_near_axis.max(axis=-1)
    t_far = t_far_axis.min(axis=-1)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    t = np.where(hit, t_near, np.inf)

    entry_axis = t_near_axis.argmax(axis=-1)
    normals = np.zeros(shape + (3,))
    axis_dir = np.take_along_axis(dirs, entry_axis[..., None], axis=-1)[..., 0]
    sign = -np.sign(axis_dir)
    for axis in range(3):
        sel = entry_axis == axis
        normals[sel, axis] = sign[sel]
    return t, normals


def render_scene(spec: SceneSpec) -> tuple[np.ndarray, MetricDepthMap]:
    """Ray-cast nearest-hit depth and a shaded RGB image.

    The returned image is float32 in [0, 1], shape (H, W, 3). Depth is
    original-space meters clipped into the scene's depth range; every
    pixel must be covered by some primitive (scenes carry a background
    wall), otherwise EmptySceneError is raised.
    """
    if not spec.primitives:
        raise EmptySceneError("scene has no primitives")
    cam = spec.camera
    dx, dy = _ray_grid(cam)

    depth = np.full((cam.height, cam.width), np.inf)
    hit_normal = np.zeros((cam.height, cam.width, 3))
    hit_albedo = np.zeros((cam.height, cam.width, 3))
    for prim in spec.primitives:
        if isinstance(prim, Plane):
            t, normals = _intersect_plane(prim, dx, dy)
        elif isinstance(prim, Box):
            t, normals = _intersect_box(prim, dx, dy)
        else:
            raise EmptySceneError(f"unsupported primitive {type(prim).__name__}")
        closer = t < depth
        depth = np.where(closer, t, depth)
        hit_normal[closer] = normals[closer]
        hit_albedo[closer] = prim.albedo

    if not np.isfinite(depth).all():
        raise EmptySceneError("scene does not cover the full frustum")

    # orient normals toward the camera before shading
    dirs = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
    facing = (hit_normal * dirs).sum(axis=-1)
    hit_normal = np.where(facing[..., None] > 0, -hit_normal, hit_normal)
    unit_normal = hit_normal / np.linalg.norm(hit_normal, axis=-1, keepdims=True)
    light = -_LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)
    diffuse = np.clip((unit_normal * light).sum(axis=-1), 0.0, 1.0)
    shade = _AMBIENT + (1.0 - _AMBIENT) * diffuse
    attenuation = 1.0 / (1.0 + depth / _FALLOFF_SCALE) ** _FALLOFF_POWER
    image = hit_albedo * (shade * attenuation)[..., None]
    noise = np.random.default_rng(spec.seed).normal(
        0.0, _NOISE_SIGMA, size=image.shape
    )
    image = np.clip(image + noise, 0.0, 1.0).astype(np.float32)

    lo, hi = spec.depth_range
    depth = np.clip(depth, lo, hi)
    return image, MetricDepthMap(depth, space=ORIGINAL)


def random_scene(
    camera: Camera, depth_range: tuple[float, float], seed: int
) -> SceneSpec:
    """Sample a back wall (possibly tilted about the vertical axis) plus boxes.

    Geometry is bounded so that all rendered depths stay inside
    depth_range: the wall tilt is limited and boxes sit strictly in front
    of the wall, behind 1.2x the near limit.
    """
    rng = np.random.default_rng(seed)
    lo, hi = depth_range
    wall_z = rng.uniform(0.45, 0.8) * hi
    tilt = rng.uniform(-0.25, 0.25)
    wall = Plane(
        point=[0.0, 0.0, wall_z],
        normal=[np.sin(tilt), 0.0, np.cos(tilt)],
        albedo=rng.uniform(0.35, 0.95, size=3),
    )
    primitives: list = [wall]

    half_w = camera.width / (2 * camera.focal)
    half_h = camera.height / (2 * camera.focal)
    for _ in range(rng.integers(3, 8)):
        cz = rng.uniform(max(2.0 * lo, 0.3 * wall_z), 0.85 * wall_z)
        size = rng.uniform(0.08, 0.35, size=3) * cz
        cx = rng.uniform(-0.8, 0.8) * half_w * cz
        cy = rng.uniform(-0.8, 0.8) * half_h * cz
        center = np.array([cx, cy, cz])
        lo_corner = center - size
        lo_corner[2] = max(lo_corner[2], 1.2 * lo)
        primitives.append(
            Box(lo=lo_corner, hi=center + size, albedo=rng.uniform(0.25, 0.95, size=3))
        )
    return SceneSpec(camera=camera, primitives=primitives,
                     depth_range=depth_range, seed=seed)
