"""Fixed roadside camera: intrinsics, extrinsics and pinhole projection.

World frame: x along the direction of travel (origin at the camera's ground
footprint), y to the left, z up. Camera frame follows the OpenCV convention
(X right, Y down, Z along the optical axis). Pixel coordinates are continuous,
so the centre of pixel (row i, col j) sits at (j + 0.5, i + 0.5) and the
optical axis hits (width_px / 2, height_px / 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraRig:
    height_m: float = 3.0
    pitch_deg: float = 45.0
    fps: float = 80.0
    width_px: int = 1920
    height_px: int = 1080
    hfov_deg: float = 90.0
    lateral_offset_m: float = 0.0

    def __post_init__(self):
        if not self.height_m > 0:
            raise ValueError(f"camera height must be positive, got {self.height_m}")
        if not 0 < self.pitch_deg < 90:
            raise ValueError(f"pitch must be in (0, 90) degrees, got {self.pitch_deg}")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.width_px < 16 or self.height_px < 16:
            raise ValueError(f"resolution must be at least 16x16, got {self.width_px}x{self.height_px}")
        if not 0 < self.hfov_deg < 180:
            raise ValueError(f"hfov must be in (0, 180) degrees, got {self.hfov_deg}")

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.width_px, self.height_px)

    @property
    def focal_px(self) -> float:
        return (self.width_px / 2.0) / math.tan(math.radians(self.hfov_deg) / 2.0)

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return np.array([0.0, self.lateral_offset_m, self.height_m])

    @property
    def intrinsics(self) -> np.ndarray:
        f = self.focal_px
        return np.array([
            [f, 0.0, self.width_px / 2.0],
            [0.0, f, self.height_px / 2.0],
            [0.0, 0.0, 1.0],
        ])

    @property
    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are the camera axes in world coordinates."""
        p = math.radians(self.pitch_deg)
        forward = [math.cos(p), 0.0, -math.sin(p)]
        right = [0.0, -1.0, 0.0]
        down = [-math.sin(p), 0.0, -math.cos(p)]
        return np.array([right, down, forward])

    def pixel_rays(self) -> np.ndarray:
        """Unit world-frame ray directions through every pixel centre, shape (H, W, 3)."""
        f = self.focal_px
        u = (np.arange(self.width_px) + 0.5 - self.width_px / 2.0) / f
        v = (np.arange(self.height_px) + 0.5 - self.height_px / 2.0) / f
        uu, vv = np.meshgrid(u, v)
        cam = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
        rays = cam @ self.rotation  # R^T applied row-wise
        return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def project_points(points, rig: CameraRig) -> np.ndarray:
    """Vectorised projection of (..., 3) world points to (..., 2) pixels.

    Points behind the image plane or outside the frame come back as NaN.
    Raises ValueError if any point coincides with the camera centre.
    """
    pts = np.asarray(points, dtype=np.float64)
    rel = pts - rig.center
    if np.any(np.all(rel == 0.0, axis=-1)):
        raise ValueError("point coincides with the camera centre; projection undefined")
    cam = rel @ rig.rotation.T
    z = cam[..., 2]
    out = np.full(pts.shape[:-1] + (2,), np.nan)
    front = z > 0
    f = rig.focal_px
    with np.errstate(divide="ignore", invalid="ignore"):
        u = f * cam[..., 0] / z + rig.width_px / 2.0
        v = f * cam[..., 1] / z + rig.height_px / 2.0
    inside = front & (u >= 0) & (u <= rig.width_px) & (v >= 0) & (v <= rig.height_px)
    out[..., 0] = np.where(inside, u, np.nan)
    out[..., 1] = np.where(inside, v, np.nan)
    return out


def project_point(p, rig: CameraRig) -> tuple[float, float] | None:
    """Project one world point; returns (u, v) or None when out of view."""
    uv = project_points(np.asarray(p, dtype=np.float64).reshape(1, 3), rig)[0]
    if np.isnan(uv[0]):
        return None
    return float(uv[0]), float(uv[1])
