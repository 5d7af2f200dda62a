"""Procedural roadside-camera episodes of a single vehicle at constant speed."""

from synthspeed.scenesynth.camera import CameraRig, project_point, project_points
from synthspeed.scenesynth.catalog import (
    VEHICLE_CATALOG,
    EnvironmentCondition,
    VehicleSpec,
    environment_grid,
    get_vehicle,
)
from synthspeed.scenesynth.episode import (
    SEGMENT_EXIT_M,
    SPEED_MAX_MPS,
    SPEED_MIN_MPS,
    Episode,
    EpisodeSpec,
    Frame,
    SpeedDraw,
    default_horizon_frames,
    motion_frame_count,
    sample_speed,
)
from synthspeed.scenesynth.render import generate_episode, iter_frames, render_frame, render_scene
from synthspeed.scenesynth.generate import draw_episode_spec, generate_dataset

__all__ = [
    "CameraRig", "project_point", "project_points",
    "VEHICLE_CATALOG", "EnvironmentCondition", "VehicleSpec", "environment_grid", "get_vehicle",
    "SEGMENT_EXIT_M", "SPEED_MAX_MPS", "SPEED_MIN_MPS", "Episode", "EpisodeSpec", "Frame", "SpeedDraw",
    "default_horizon_frames", "motion_frame_count", "sample_speed",
    "generate_episode", "iter_frames", "render_frame", "render_scene",
    "draw_episode_spec", "generate_dataset",
]
