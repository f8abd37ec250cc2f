"""
Dataset Store
=============
Everything that turns files (or a seed) into DataInstance objects:
  - load_image_dir()        : directory of PNGs, class labels from sub-directories
  - make_synthetic_images() : smooth blob / stripe images for desk-scale runs
  - load_synthetic_scene()  : ray-cast sphere / cube scenes on a camera ring
  - save_scene() / load_scene_file() : .npz light-field datasets
  - load_png() / save_png() / save_raw() : image I/O
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from PIL import Image, UnidentifiedImageError
from scipy.spatial.transform import Rotation

from locality_inr import coords as coords_lib
from locality_inr.errors import ConfigError, DatasetError, DimensionError, FormatError

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ('.png',)
SCENE_FORMAT_VERSION = 1
DATASET_KINDS = ('image', 'lightfield')


# ─────────────────────────────────────────────────────────────────────────────
# DATA INSTANCE
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class DataInstance:
    """
    One signal: a single image, or a posed set of views of one scene.

    images are (V, H, W, C) floats in [0, 1]; an image instance has V = 1 and
    no poses. For light fields the support views feed the encoder and the
    query views (default: the support views) are the decoder targets.
    """
    instance_id: str
    images: np.ndarray
    poses: Optional[np.ndarray] = None
    intrinsics: Optional[coords_lib.CameraIntrinsics] = None
    label: Optional[str] = None
    support_views: Optional[Tuple[int, ...]] = None
    query_views: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None, :, :, None]
        elif images.ndim == 3:
            images = images[None]
        if images.ndim != 4 or 0 in images.shape:
            raise DimensionError(f"instance {self.instance_id}: images must be (V, H, W, C), got {images.shape}")
        self.images = images
        if self.poses is not None:
            poses = np.stack([coords_lib.validate_pose(p) for p in np.asarray(self.poses)])
            if poses.shape[0] != images.shape[0]:
                raise DimensionError(
                    f"instance {self.instance_id}: {images.shape[0]} views but {poses.shape[0]} poses"
                )
            if self.intrinsics is None:
                raise DatasetError(f"instance {self.instance_id}: posed views need camera intrinsics")
            self.poses = poses
        for name in ('support_views', 'query_views'):
            views = getattr(self, name)
            if views is None:
                continue
            views = tuple(int(i) for i in views)
            if not views or any(not 0 <= i < images.shape[0] for i in views):
                raise DatasetError(f"instance {self.instance_id}: bad {name.replace('_', ' ')} {views}")
            setattr(self, name, views)

    @property
    def kind(self) -> str:
        return 'image' if self.poses is None else 'lightfield'

    @property
    def num_views(self) -> int:
        return self.images.shape[0]

    @property
    def height(self) -> int:
        return self.images.shape[1]

    @property
    def width(self) -> int:
        return self.images.shape[2]

    @property
    def channels(self) -> int:
        return self.images.shape[3]

    @property
    def d_in(self) -> int:
        return 2 if self.kind == 'image' else 6

    @property
    def support(self) -> Tuple[int, ...]:
        if self.kind == 'image':
            return (0,)
        return self.support_views if self.support_views is not None else tuple(range(self.num_views))

    @property
    def query(self) -> Tuple[int, ...]:
        if self.kind == 'image':
            return (0,)
        return self.query_views if self.query_views is not None else self.support

    @property
    def grid_shape(self) -> Tuple[int, ...]:
        if self.kind == 'image':
            return (self.height, self.width)
        return (len(self.query), self.height, self.width)

    @property
    def num_coordinates(self) -> int:
        return int(np.prod(self.grid_shape))

    def view_rays(self, view: int) -> np.ndarray:
        return coords_lib.ray_bundle(self.poses[view], self.intrinsics, self.height, self.width)

    def coordinates(self, coord_range: str = coords_lib.DEFAULT_COORD_RANGE) -> np.ndarray:
        """(M, d_in) decoder inputs in the same order as targets()."""
        if self.kind == 'image':
            return coords_lib.grid_coords(self.height, self.width, coord_range)
        return np.concatenate([self.view_rays(v) for v in self.query], axis=0)

    def targets(self) -> np.ndarray:
        return self.images[list(self.query)].reshape(-1, self.channels)

    def encoder_views(self) -> np.ndarray:
        """(V, H, W, C') arrays to patchify; light-field views carry 6 Plücker channels."""
        if self.kind == 'image':
            return self.images[:1]
        views = [
            np.concatenate([self.images[v], self.view_rays(v).reshape(self.height, self.width, 6)], axis=-1)
            for v in self.support
        ]
        return np.stack(views, axis=0)

    def with_support(self, views: Sequence[int]) -> 'DataInstance':
        return replace(self, support_views=tuple(views), query_views=None)

    def with_split(self, support: Sequence[int], query: Sequence[int]) -> 'DataInstance':
        """Encode `support`, decode and score `query`."""
        return replace(self, support_views=tuple(support), query_views=tuple(query))


@dataclass
class DatasetConfig:
    num_instances: int = 8
    height: int = 32
    width: int = 32
    channels: int = 3
    seed: int = 0
    n_jobs: int = 1
    max_instances: int = 0          # 0 -> no limit
    # Synthetic light-field scenes
    num_views: int = 8
    shape: str = 'sphere'           # sphere | cube | mixed
    fov_deg: float = 40.0
    ring_radius: float = 3.0
    elevation_deg: float = 20.0

    def validate(self) -> None:
        for name in ('num_instances', 'height', 'width', 'channels', 'num_views'):
            if getattr(self, name) < 1:
                raise ConfigError(f"dataset.{name}", f"must be positive, got {getattr(self, name)}")
        if self.shape not in ('sphere', 'cube', 'mixed'):
            raise ConfigError("dataset.shape", f"unknown shape {self.shape!r}; use sphere, cube or mixed")
        if not 0 < self.fov_deg < 180:
            raise ConfigError("dataset.fov_deg", f"must lie in (0, 180), got {self.fov_deg}")


# ─────────────────────────────────────────────────────────────────────────────
# IMAGE I/O
# ─────────────────────────────────────────────────────────────────────────────
def load_png(path: str) -> np.ndarray:
    """8-bit PNG -> (H, W, 3) float64 in [0, 1]."""
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert('RGB'), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError(f"cannot read image {path}: {e}") from e
    return array / 255.0


def save_png(path: str, array: np.ndarray) -> None:
    """Write (H, W), (H, W, 1) or (H, W, 3) floats in [0, 1] as an 8-bit PNG."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 3 and array.shape[-1] == 1:
        array = array[..., 0]
    pixels = np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(pixels).save(path)


def save_raw(path: str, array: np.ndarray) -> None:
    """Float dump next to a PNG so PSNR can be recomputed without quantization."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.save(path, np.asarray(array, dtype=np.float64))


def _image_files(directory: str) -> List[Tuple[str, Optional[str]]]:
    entries = sorted(os.listdir(directory))
    files = [(os.path.join(directory, e), None) for e in entries
             if e.lower().endswith(IMAGE_EXTENSIONS) and os.path.isfile(os.path.join(directory, e))]
    if files:
        return files
    # Class-per-subdirectory layout
    for sub in entries:
        sub_path = os.path.join(directory, sub)
        if os.path.isdir(sub_path):
            files.extend(
                (os.path.join(sub_path, e), sub) for e in sorted(os.listdir(sub_path))
                if e.lower().endswith(IMAGE_EXTENSIONS)
            )
    return files


def load_image_dir(directory: str, n_jobs: int = 1, max_instances: int = 0) -> List[DataInstance]:
    if not os.path.isdir(directory):
        raise DatasetError(f"image directory not found: {directory}")
    files = _image_files(directory)
    if not files:
        raise DatasetError(f"no PNG images in {directory}")
    if max_instances:
        files = files[:max_instances]

    arrays = Parallel(n_jobs=n_jobs)(delayed(load_png)(path) for path, _ in files)
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise DatasetError(f"images in {directory} differ in size: {sorted(shapes)}")

    instances = []
    for (path, label), array in zip(files, arrays):
        rel = os.path.relpath(path, directory)
        instances.append(DataInstance(os.path.splitext(rel)[0], array, label=label))
    logger.info("loaded %d images (%s) from %s", len(instances), arrays[0].shape, directory)
    return instances


# ─────────────────────────────────────────────────────────────────────────────
# SYNTHETIC IMAGES
# ─────────────────────────────────────────────────────────────────────────────
def synthetic_image(height: int, width: int, rng: np.random.Generator, channels: int = 3) -> np.ndarray:
    """A few coloured Gaussian blobs over a tilted sinusoidal stripe."""
    ys, xs = np.meshgrid(np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing='ij')
    image = np.empty((height, width, channels))
    base = rng.uniform(0.1, 0.4, size=channels)
    angle = rng.uniform(0, np.pi)
    freq = rng.uniform(1.0, 4.0)
    stripe = 0.5 + 0.5 * np.sin(np.pi * freq * (np.cos(angle) * xs + np.sin(angle) * ys))
    image[:] = base + 0.2 * stripe[..., None]
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(-0.8, 0.8, size=2)
        width_blob = rng.uniform(0.15, 0.45)
        blob = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * width_blob ** 2))
        image += blob[..., None] * rng.uniform(-0.4, 0.6, size=channels)
    return np.clip(image, 0.0, 1.0)


def make_synthetic_images(count: int, height: int, width: int, seed: int = 0,
                          channels: int = 3) -> List[DataInstance]:
    return [
        DataInstance(f"synthetic_{i:04d}",
                     synthetic_image(height, width, np.random.default_rng([seed, i]), channels))
        for i in range(count)
    ]


# ─────────────────────────────────────────────────────────────────────────────
# SYNTHETIC LIGHT-FIELD SCENES
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class SceneSpec:
    shape: str = 'sphere'                    # sphere | cube
    size: float = 0.8                        # sphere radius / cube half-extent
    base_color: Tuple[float, float, float] = (0.8, 0.4, 0.2)
    texture_freq: float = 2.0
    object_rotation_deg: Tuple[float, float, float] = (0.0, 30.0, 0.0)
    light_dir: Tuple[float, float, float] = (0.4, 0.8, 0.5)
    background: float = 0.1
    num_views: int = 8
    height: int = 32
    width: int = 32
    fov_deg: float = 40.0
    ring_radius: float = 3.0
    elevation_deg: float = 20.0
    support_views: Optional[Tuple[int, ...]] = None

    @property
    def intrinsics(self) -> coords_lib.CameraIntrinsics:
        return coords_lib.CameraIntrinsics.from_fov(self.fov_deg, self.height, self.width)

    @classmethod
    def from_dataset_config(cls, config: DatasetConfig, index: int = 0) -> 'SceneSpec':
        """Scene `index` of a synthetic dataset; colours and pose vary with (seed, index)."""
        rng = np.random.default_rng([config.seed, index])
        shape = config.shape
        if shape == 'mixed':
            shape = ('sphere', 'cube')[index % 2]
        return cls(
            shape=shape,
            base_color=tuple(float(c) for c in rng.uniform(0.3, 0.95, size=3)),
            texture_freq=float(rng.uniform(1.0, 3.0)),
            object_rotation_deg=tuple(float(a) for a in rng.uniform(-45.0, 45.0, size=3)),
            num_views=config.num_views, height=config.height, width=config.width,
            fov_deg=config.fov_deg, ring_radius=config.ring_radius,
            elevation_deg=config.elevation_deg,
        )


def camera_ring(spec: SceneSpec) -> np.ndarray:
    """(num_views, 4, 4) poses evenly spaced on a ring, all looking at the origin."""
    elevation = np.radians(spec.elevation_deg)
    poses = []
    for k in range(spec.num_views):
        theta = 2.0 * np.pi * k / spec.num_views
        eye = spec.ring_radius * np.array([
            np.cos(elevation) * np.sin(theta),
            np.sin(elevation),
            np.cos(elevation) * np.cos(theta),
        ])
        poses.append(coords_lib.look_at_pose(eye))
    return np.stack(poses)


def orbit_pose(pose: np.ndarray, degrees: float, axis: str = 'y') -> np.ndarray:
    """Rotate a camera about a world axis through the origin."""
    pose = coords_lib.validate_pose(pose)
    rot = Rotation.from_euler(axis, degrees, degrees=True).as_matrix()
    out = np.eye(4)
    out[:3, :3] = rot @ pose[:3, :3]
    out[:3, 3] = rot @ pose[:3, 3]
    return out


def _intersect_sphere(origins, dirs, radius):
    b = np.einsum('ij,ij->i', origins, dirs)
    c = np.einsum('ij,ij->i', origins, origins) - radius ** 2
    disc = b * b - c
    hit = disc >= 0
    t = np.where(hit, -b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
    hit &= t > 0
    t = np.where(hit, t, 0.0)
    points = origins + t[:, None] * dirs
    normals = points / radius
    return hit, points, normals


def _intersect_cube(origins, dirs, half):
    with np.errstate(divide='ignore', invalid='ignore'):
        inv = 1.0 / dirs
        t1 = (-half - origins) * inv
        t2 = (half - origins) * inv
    t_near = np.nanmax(np.minimum(t1, t2), axis=-1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = (t_far >= t_near) & (t_near > 0)
    t = np.where(hit, t_near, 0.0)
    points = origins + t[:, None] * dirs
    axis = np.argmax(np.abs(points) / half, axis=-1)
    normals = np.zeros_like(points)
    normals[np.arange(len(points)), axis] = np.sign(points[np.arange(len(points)), axis])
    return hit, points, normals


def render_view(spec: SceneSpec, pose: np.ndarray,
                intrinsics: Optional[coords_lib.CameraIntrinsics] = None,
                height: Optional[int] = None, width: Optional[int] = None) -> np.ndarray:
    """Deterministic ray-cast of the textured, Lambertian-shaded object, (H, W, 3)."""
    height = height or spec.height
    width = width or spec.width
    intrinsics = intrinsics or spec.intrinsics
    origins, dirs = coords_lib.camera_rays(pose, intrinsics, height, width)

    # Object frame
    rot = Rotation.from_euler('xyz', spec.object_rotation_deg, degrees=True).as_matrix()
    local_o, local_d = origins @ rot, dirs @ rot
    if spec.shape == 'sphere':
        hit, points, normals = _intersect_sphere(local_o, local_d, spec.size)
    elif spec.shape == 'cube':
        hit, points, normals = _intersect_cube(local_o, local_d, spec.size)
    else:
        raise ConfigError("dataset.shape", f"unknown shape {spec.shape!r}")

    f = np.pi * spec.texture_freq / spec.size
    pattern = 0.5 + 0.25 * (np.sin(f * points[:, 0]) + np.cos(f * (points[:, 1] + points[:, 2])))
    albedo = np.asarray(spec.base_color) * (0.35 + 0.65 * pattern[:, None])

    light = np.asarray(spec.light_dir, dtype=np.float64)
    light = (light / np.linalg.norm(light)) @ rot
    shade = 0.3 + 0.7 * np.clip(normals @ light, 0.0, None)

    colors = np.full((height * width, 3), spec.background)
    colors[hit] = np.clip(albedo[hit] * shade[hit, None], 0.0, 1.0)
    return colors.reshape(height, width, 3)


def render_scene(spec: SceneSpec, instance_id: str = 'scene_0000') -> DataInstance:
    poses = camera_ring(spec)
    images = np.stack([render_view(spec, pose) for pose in poses])
    return DataInstance(instance_id, images, poses=poses, intrinsics=spec.intrinsics,
                        support_views=spec.support_views)


def load_synthetic_scene(config: DatasetConfig) -> List[DataInstance]:
    return [
        render_scene(SceneSpec.from_dataset_config(config, i), f"scene_{i:04d}")
        for i in range(config.num_instances)
    ]


# ─────────────────────────────────────────────────────────────────────────────
# SCENE FILES (.npz)
# ─────────────────────────────────────────────────────────────────────────────
def save_scene(path: str, instances: Sequence[DataInstance]) -> None:
    arrays = {
        'format_version': np.array(SCENE_FORMAT_VERSION),
        'ids': np.array([inst.instance_id for inst in instances]),
    }
    for i, inst in enumerate(instances):
        if inst.kind != 'lightfield':
            raise DatasetError(f"instance {inst.instance_id} has no poses; only light fields go in scene files")
        arrays[f"{i}.images"] = inst.images
        arrays[f"{i}.poses"] = inst.poses
        arrays[f"{i}.intrinsics"] = inst.intrinsics.as_array()
        arrays[f"{i}.support"] = np.array(inst.support, dtype=np.int64)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savez_compressed(path, **arrays)


def load_scene_file(path: str) -> List[DataInstance]:
    if not os.path.isfile(path):
        raise DatasetError(f"scene file not found: {path}")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise DatasetError(f"cannot read scene file {path}: {e}") from e
    with archive:
        if 'format_version' not in archive.files or 'ids' not in archive.files:
            raise FormatError(f"{path}: not a scene file")
        version = int(archive['format_version'])
        if version > SCENE_FORMAT_VERSION:
            raise FormatError(f"{path}: scene format v{version} is newer than supported v{SCENE_FORMAT_VERSION}")
        ids = [str(x) for x in archive['ids']]
        if not ids:
            raise DatasetError(f"scene file {path} holds no scenes")
        instances = []
        for i, instance_id in enumerate(ids):
            fx, fy, cx, cy = archive[f"{i}.intrinsics"]
            instances.append(DataInstance(
                instance_id,
                archive[f"{i}.images"],
                poses=archive[f"{i}.poses"],
                intrinsics=coords_lib.CameraIntrinsics(float(fx), float(fy), float(cx), float(cy)),
                support_views=tuple(int(v) for v in archive[f"{i}.support"]),
            ))
    return instances


# ─────────────────────────────────────────────────────────────────────────────
# DISPATCH
# ─────────────────────────────────────────────────────────────────────────────
def load_dataset(path: str, kind: str, config: Optional[DatasetConfig] = None) -> List[DataInstance]:
    """`path` is a directory / .npz file, or 'synthetic' for a generated set."""
    config = config or DatasetConfig()
    if kind not in DATASET_KINDS:
        raise ConfigError("experiment", f"unknown experiment kind {kind!r}; use {DATASET_KINDS}")
    if not path:
        raise ConfigError("dataset_path", "missing dataset path")
    config.validate()

    if path == 'synthetic':
        if kind == 'image':
            instances = make_synthetic_images(config.num_instances, config.height, config.width,
                                              config.seed, config.channels)
        else:
            instances = load_synthetic_scene(config)
    elif kind == 'image':
        instances = load_image_dir(path, n_jobs=config.n_jobs, max_instances=config.max_instances)
    else:
        instances = load_scene_file(path)
        if config.max_instances:
            instances = instances[:config.max_instances]

    if not instances:
        raise DatasetError(f"dataset {path} is empty")
    return instances


__all__ = [
    'DataInstance', 'DatasetConfig', 'SceneSpec',
    'load_png', 'save_png', 'save_raw', 'load_image_dir',
    'synthetic_image', 'make_synthetic_images',
    'camera_ring', 'orbit_pose', 'render_view', 'render_scene', 'load_synthetic_scene',
    'save_scene', 'load_scene_file', 'load_dataset',
]
