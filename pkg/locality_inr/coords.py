"""
Coordinates & Frequency Features
================================
Coordinate generation for image grids and camera rays, plus the Fourier
embedding and the ReLU frequency-feature extractor built on it.

All functions here are pure: numpy in, numpy (or Tensor) out.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from locality_inr import tensor_core as tc
from locality_inr.errors import BandwidthOrderWarning, ConfigError, ContractError, DimensionError

# Pixel-center normalization: 'symmetric' -> [-1, 1], 'unit' -> [0, 1]
COORD_RANGES = ('symmetric', 'unit')
DEFAULT_COORD_RANGE = 'symmetric'

ORTHONORMAL_TOL = 1e-5


# ─────────────────────────────────────────────────────────────────────────────
# BANDWIDTHS
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class BandwidthSpec:
    sigma_q: float
    sigma_levels: Tuple[float, ...]
    d_F: int

    @property
    def num_levels(self) -> int:
        return len(self.sigma_levels)


def validate_bandwidths(spec: BandwidthSpec, d_in: int) -> None:
    """Raise on invalid sigmas / widths, warn when the coarse-to-fine order is broken."""
    for i, sigma in enumerate(spec.sigma_levels):
        if not sigma > 1:
            raise ConfigError(f"decoder.sigma_levels[{i}]", f"bandwidth must be > 1, got {sigma}")
    if not spec.sigma_q > 1:
        raise ConfigError("decoder.sigma_q", f"bandwidth must be > 1, got {spec.sigma_q}")
    n_frequencies(spec.d_F, d_in)

    chain = list(spec.sigma_levels) + [spec.sigma_q]
    if any(a < b for a, b in zip(chain, chain[1:])):
        warnings.warn(
            f"bandwidths {tuple(spec.sigma_levels)} / sigma_q={spec.sigma_q} are not ordered "
            f"sigma_1 >= ... >= sigma_L >= sigma_q",
            BandwidthOrderWarning,
            stacklevel=2,
        )


def n_frequencies(d_F: int, d_in: int) -> int:
    """Number of frequencies per input dimension, n = d_F / (2 d_in)."""
    if d_F % (2 * d_in) != 0:
        raise ConfigError("decoder.d_F", f"d_F={d_F} is not divisible by 2*d_in={2 * d_in}")
    n = d_F // (2 * d_in)
    if n < 2:
        raise ConfigError("decoder.d_F", f"d_F={d_F} gives n={n} frequencies per axis; need n >= 2")
    return n


def fourier_frequencies(sigma: float, n: int) -> np.ndarray:
    """Log-uniform ladder omega_j = sigma^(j/(n-1)), j = 0..n-1, with exact endpoints."""
    if n < 2:
        raise ConfigError("decoder.d_F", f"need at least 2 frequencies, got {n}")
    omega = np.power(float(sigma), np.arange(n, dtype=np.float64) / (n - 1))
    omega[0] = 1.0
    omega[-1] = float(sigma)
    return omega


def fourier_features(v: np.ndarray, sigma: float, d_F: int) -> np.ndarray:
    """
    Fourier embedding of coordinates `v` (..., d_in) into (..., d_F).

    Layout per input axis i and frequency j: [cos(pi w_j v_i), sin(pi w_j v_i)],
    axis-major, so d_in = 1, n = 2 gives [cos w0, sin w0, cos w1, sin w1].
    """
    if not sigma > 1:
        raise ConfigError("sigma", f"bandwidth must be > 1, got {sigma}")
    v = np.asarray(v, dtype=np.float64)
    d_in = v.shape[-1]
    omega = fourier_frequencies(sigma, n_frequencies(d_F, d_in))
    phase = math.pi * v[..., :, None] * omega                    # (..., d_in, n)
    pairs = np.stack([np.cos(phase), np.sin(phase)], axis=-1)    # (..., d_in, n, 2)
    return pairs.reshape(v.shape[:-1] + (d_F,))


def frequency_features(v: np.ndarray, sigma: float, W: tc.Tensor, b: tc.Tensor) -> tc.Tensor:
    """ReLU(gamma_sigma(v) W + b); W is stored (d_F, d) for row-vector batches."""
    d_F = W.shape[0]
    if W.ndim != 2 or b.shape != (W.shape[1],):
        raise DimensionError(f"frequency_features: W {W.shape} and b {b.shape} do not agree")
    gamma = tc.Tensor(fourier_features(v, sigma, d_F))
    return tc.relu(tc.add(tc.matmul(gamma, W), b))


# ─────────────────────────────────────────────────────────────────────────────
# IMAGE GRIDS
# ─────────────────────────────────────────────────────────────────────────────
def axis_centers(size: int, coord_range: str = DEFAULT_COORD_RANGE) -> np.ndarray:
    if coord_range not in COORD_RANGES:
        raise ConfigError("decoder.coord_range", f"unknown range {coord_range!r}; use {COORD_RANGES}")
    centers = (np.arange(size, dtype=np.float64) + 0.5) / size
    return 2.0 * centers - 1.0 if coord_range == 'symmetric' else centers


def grid_coords(height: int, width: int, coord_range: str = DEFAULT_COORD_RANGE) -> np.ndarray:
    """Row-major pixel-center (y, x) coordinates, shape (height*width, 2)."""
    if height < 1 or width < 1:
        raise ContractError(f"grid_coords: dimensions must be >= 1, got {height}x{width}")
    ys = axis_centers(height, coord_range)
    xs = axis_centers(width, coord_range)
    yy, xx = np.meshgrid(ys, xs, indexing='ij')
    return np.stack([yy.reshape(-1), xx.reshape(-1)], axis=-1)


# ─────────────────────────────────────────────────────────────────────────────
# RAYS
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def from_fov(cls, fov_deg: float, height: int, width: int) -> 'CameraIntrinsics':
        focal = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
        return cls(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0)

    def scaled(self, height: int, width: int, ref_height: int, ref_width: int) -> 'CameraIntrinsics':
        sy, sx = height / ref_height, width / ref_width
        return CameraIntrinsics(fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx, cy=self.cy * sy)

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy], dtype=np.float64)


def plucker_ray(camera_origin: Sequence[float], direction: Sequence[float]) -> np.ndarray:
    """(d_hat, o x d_hat) for a single ray."""
    return plucker_rays(np.asarray(camera_origin, dtype=np.float64)[None],
                        np.asarray(direction, dtype=np.float64)[None])[0]


def plucker_rays(origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Batched Plücker map, (N, 3) x (N, 3) -> (N, 6)."""
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    norms = np.linalg.norm(directions, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ContractError("plucker_ray: direction must be nonzero")
    unit = directions / norms
    moment = np.cross(np.broadcast_to(origins, unit.shape), unit)
    return np.concatenate([unit, moment], axis=-1)


def validate_pose(pose: np.ndarray) -> np.ndarray:
    """Return the 4x4 camera-to-world matrix, rejecting non-rotations."""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape == (3, 4):
        pose = np.vstack([pose, [0.0, 0.0, 0.0, 1.0]])
    if pose.shape != (4, 4) or not np.all(np.isfinite(pose)):
        raise ContractError(f"camera pose must be a finite 3x4 or 4x4 matrix, got shape {pose.shape}")
    rot = pose[:3, :3]
    if not np.allclose(rot.T @ rot, np.eye(3), atol=ORTHONORMAL_TOL) or np.linalg.det(rot) < 0:
        raise ContractError("camera pose rotation is not orthonormal (degenerate pose)")
    return pose


def camera_rays(camera_pose: np.ndarray, intrinsics: CameraIntrinsics,
                height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    World-space (origins, unit directions) through every pixel center, row-major.

    Pinhole camera, OpenCV convention: +z forward, +x right, +y down.
    """
    pose = validate_pose(camera_pose)
    if intrinsics.fx <= 0 or intrinsics.fy <= 0:
        raise ContractError(f"focal length must be positive, got fx={intrinsics.fx}, fy={intrinsics.fy}")
    if height < 1 or width < 1:
        raise ContractError(f"ray_bundle: dimensions must be >= 1, got {height}x{width}")
    vs, us = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing='ij')
    dirs_cam = np.stack([
        (us.reshape(-1) - intrinsics.cx) / intrinsics.fx,
        (vs.reshape(-1) - intrinsics.cy) / intrinsics.fy,
        np.ones(height * width),
    ], axis=-1)
    dirs_world = dirs_cam @ pose[:3, :3].T
    dirs_world /= np.linalg.norm(dirs_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(pose[:3, 3], dirs_world.shape).copy()
    return origins, dirs_world


def ray_bundle(camera_pose: np.ndarray, intrinsics: CameraIntrinsics,
               height: int, width: int) -> np.ndarray:
    """One Plücker coordinate per pixel center, row-major, shape (height*width, 6)."""
    origins, directions = camera_rays(camera_pose, intrinsics, height, width)
    return plucker_rays(origins, directions)


def look_at_pose(eye: Sequence[float], target: Sequence[float] = (0.0, 0.0, 0.0),
                 up: Sequence[float] = (0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world matrix looking from `eye` at `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    if np.linalg.norm(forward) == 0:
        raise ContractError("look_at_pose: eye and target coincide")
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-8:
        raise ContractError("look_at_pose: view direction is parallel to up")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = eye
    return pose
