"""Episode recipes, constant-speed kinematics and speed sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from synthspeed.scenesynth.camera import CameraRig
from synthspeed.scenesynth.catalog import EnvironmentCondition, VehicleSpec

SPEED_OFFSET_MPS = 8.33
SPEED_SPAN_MPS = 19.44
SPEED_MIN_MPS = SPEED_OFFSET_MPS
SPEED_MAX_MPS = SPEED_OFFSET_MPS + SPEED_SPAN_MPS

# Vehicles drive toward the camera (decreasing x). The segment ends with the
# centre 4 m behind the camera foot, where even the longest catalog vehicle
# (6.36 m) has left the bottom of the view; the segment midpoint then sits at
# 6 m, inside the 16:9 view for the tallest vehicle.
SEGMENT_EXIT_M = -4.0
DEFAULT_SEGMENT_M = 20.0
HORIZON_SPEED_KMH = 30.0


class SpeedDraw(NamedTuple):
    speed_mps: float
    uniform_draw: float


def speed_from_draw(x: float) -> float:
    return SPEED_OFFSET_MPS + x * SPEED_SPAN_MPS


def sample_speed(rng: np.random.Generator) -> SpeedDraw:
    x = float(rng.random())
    return SpeedDraw(speed_from_draw(x), x)


def motion_frame_count(segment_length_m: float, speed_mps: float, fps: float) -> int:
    """Frames needed for the vehicle to cover the segment: ceil(L / v * fps)."""
    # round() absorbs float noise such as 1600 / 10 -> 160.00000000000003
    return math.ceil(round(segment_length_m * fps / speed_mps, 9))


def default_horizon_frames(segment_length_m: float = DEFAULT_SEGMENT_M, fps: float = 80.0) -> int:
    """Frames the slowest (30 km/h) vehicle needs to cross the segment."""
    return math.ceil(round(segment_length_m * fps * 3.6 / HORIZON_SPEED_KMH, 9))


@dataclass(frozen=True)
class EpisodeSpec:
    episode_index: int
    uniform_draw: float
    vehicle: VehicleSpec
    environment: EnvironmentCondition = field(default_factory=EnvironmentCondition)
    rng_seed: int = 0
    segment_length_m: float = DEFAULT_SEGMENT_M
    record_to_horizon: bool = False

    def __post_init__(self):
        if self.episode_index < 0:
            raise ValueError(f"episode_index must be >= 0, got {self.episode_index}")
        if not 0.0 <= self.uniform_draw <= 1.0:
            raise ValueError(f"uniform draw must lie in [0, 1], got {self.uniform_draw}")

    @property
    def speed_mps(self) -> float:
        return speed_from_draw(self.uniform_draw)

    def n_frames(self, rig: CameraRig) -> int:
        if self.segment_length_m <= 0:
            raise ValueError(f"segment_length_m must be positive, got {self.segment_length_m}")
        n = motion_frame_count(self.segment_length_m, self.speed_mps, rig.fps)
        if self.record_to_horizon:
            n = max(n, default_horizon_frames(self.segment_length_m, rig.fps))
        return n

    @property
    def entry_x(self) -> float:
        return SEGMENT_EXIT_M + self.segment_length_m

    def vehicle_x(self, t: float) -> float:
        return self.entry_x - self.speed_mps * t

    def vehicle_visible(self, t: float) -> bool:
        """False once the vehicle has finished the segment (record_to_horizon tail)."""
        return self.speed_mps * t <= self.segment_length_m

    def ground_truth(self, n_frames: int, fps: float) -> np.ndarray:
        """Vehicle centre (x, y, z) per frame, computed in closed form."""
        k = np.arange(n_frames, dtype=np.float64)
        pos = np.zeros((n_frames, 3))
        pos[:, 0] = self.entry_x - self.speed_mps * k / fps
        return pos


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    frame_index: int
    timestamp_s: float


@dataclass
class Episode:
    spec: EpisodeSpec
    rig: CameraRig
    frames: list[Frame]
    ground_truth: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.frames)
