"""Deterministic ray-cast renderer for the roadside scene.

Every pixel ray is intersected with the ground plane and with the vehicle's
axis-aligned box. Ground points also cast a shadow ray toward the sun. Weather
is layered on top: wet patches are fixed in world coordinates (seeded per
episode), rain streaks are drawn in image space (seeded per frame).
"""

from __future__ import annotations

import functools

import numpy as np

from synthspeed.scenesynth.camera import CameraRig
from synthspeed.scenesynth.catalog import EnvironmentCondition, VehicleSpec
from synthspeed.scenesynth.episode import Episode, EpisodeSpec, Frame

LANE_HALF_WIDTH_M = 1.75
ROAD_LEFT_EDGE_M = 3 * LANE_HALF_WIDTH_M  # opposite lane lies at y in [1.75, 5.25]
LINE_HALF_WIDTH_M = 0.075
DASH_PERIOD_M = 6.0
DASH_LENGTH_M = 3.0
FAR_LIMIT_M = 400.0
WET_CELL_M = 0.6
MAX_WET_COVERAGE = 0.5
SUN_AZIMUTH_RAD = np.radians(125.0)

ASPHALT = np.array([92.0, 92.0, 96.0])
GRASS = np.array([70.0, 115.0, 55.0])
PAINT = np.array([235.0, 235.0, 225.0])
GLASS = np.array([40.0, 50.0, 65.0])
RAIN = np.array([205.0, 210.0, 220.0])
SKY = {"Noon": np.array([140.0, 185.0, 235.0]), "Sunset": np.array([235.0, 150.0, 95.0])}
TINT = {"Noon": np.array([1.0, 1.0, 1.0]), "Sunset": np.array([1.0, 0.8, 0.62])}
AMBIENT = 0.35
SHADOW_KEEP = 0.45


@functools.lru_cache(maxsize=8)
def _rays(rig: CameraRig) -> np.ndarray:
    rays = rig.pixel_rays()
    rays.setflags(write=False)
    return rays


def _sun_direction(elevation_deg: float) -> np.ndarray:
    e = np.radians(elevation_deg)
    return np.array([np.cos(e) * np.cos(SUN_AZIMUTH_RAD), np.cos(e) * np.sin(SUN_AZIMUTH_RAD), np.sin(e)])


def _hash_unit(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Stateless integer hash of (ix, iy, seed) mapped to [0, 1)."""
    h = (ix.astype(np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         ^ iy.astype(np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
         ^ np.uint64((seed * 0x165667B19E3779F9) & 0xFFFFFFFFFFFFFFFF))
    h ^= h >> np.uint64(31)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(29)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(32)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def vehicle_box(vehicle: VehicleSpec, x_center: float) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([x_center - vehicle.length_m / 2, -vehicle.width_m / 2, 0.0])
    hi = np.array([x_center + vehicle.length_m / 2, vehicle.width_m / 2, vehicle.height_m])
    return lo, hi


def box_corners(vehicle: VehicleSpec, x_center: float) -> np.ndarray:
    lo, hi = vehicle_box(vehicle, x_center)
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def _ray_box(origins, dirs, lo, hi):
    """Slab test. Returns (t_entry, hit_mask, entry_axis); t_entry is inf on miss."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origins) * inv
        t2 = (hi - origins) * inv
    # parallel rays: inside the slab means unbounded, outside means miss
    parallel = dirs == 0
    inside = (origins >= lo) & (origins <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    t_entry = tmin.max(axis=-1)
    t_exit = tmax.min(axis=-1)
    hit = (t_entry <= t_exit) & (t_exit > 1e-9) & (t_entry > 1e-9)
    axis = tmin.argmax(axis=-1)
    return np.where(hit, t_entry, np.inf), hit, axis


def _rain_streaks(img: np.ndarray, pct: int, seed: int, frame_index: int) -> None:
    if pct == 0:
        return
    h, w, _ = img.shape
    rng = np.random.default_rng([seed, frame_index, 7919])
    n = int(round(pct / 100.0 * 0.02 * h * w))
    length = max(2, h // 10)
    rows0 = rng.integers(-length, h, size=n)
    cols0 = rng.integers(0, w, size=n)
    steps = np.arange(length)
    rows = rows0[:, None] + steps[None, :]
    cols = cols0[:, None] + np.floor(steps * 0.25).astype(np.int64)[None, :]
    keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    r, c = rows[keep], cols[keep]
    img[r, c] = 0.45 * img[r, c] + 0.55 * RAIN


def render_scene(
    rig: CameraRig,
    environment: EnvironmentCondition,
    rng_seed: int,
    frame_index: int,
    vehicle: VehicleSpec | None = None,
    x_center: float | None = None,
) -> np.ndarray:
    """Render one (H, W, 3) uint8 image; pass vehicle=None for an empty road."""
    rays = _rays(rig)
    origin = rig.center
    sun = _sun_direction(environment.sun_elevation_deg)
    light = (AMBIENT + (1 - AMBIENT) * sun[2]) * (1.0 - 0.3 * environment.precipitation_pct / 100.0)
    tint = TINT[environment.sun]
    sky = SKY[environment.sun] * (1.0 - 0.35 * environment.precipitation_pct / 100.0)

    img = np.empty(rays.shape, dtype=np.float64)
    img[...] = sky

    dz = rays[..., 2]
    with np.errstate(divide="ignore"):
        t_ground = np.where(dz < 0, -origin[2] / dz, np.inf)
    ground = t_ground < FAR_LIMIT_M
    t_ground = np.where(ground, t_ground, np.inf)
    gp = origin + np.where(ground, t_ground, 0.0)[..., None] * rays
    gx, gy = gp[..., 0], gp[..., 1]

    # ground albedo: grass, asphalt, painted lines
    on_road = (gy > -LANE_HALF_WIDTH_M - 0.3) & (gy < ROAD_LEFT_EDGE_M + 0.3)
    albedo = np.where(on_road[..., None], ASPHALT, GRASS)
    edge = (np.abs(gy + LANE_HALF_WIDTH_M) < LINE_HALF_WIDTH_M) | (np.abs(gy - ROAD_LEFT_EDGE_M) < LINE_HALF_WIDTH_M)
    dashed = (np.abs(gy - LANE_HALF_WIDTH_M) < LINE_HALF_WIDTH_M) & (np.mod(gx, DASH_PERIOD_M) < DASH_LENGTH_M)
    albedo = np.where((edge | dashed)[..., None], PAINT, albedo)

    box = None
    t_box = np.full(dz.shape, np.inf)
    if vehicle is not None:
        lo, hi = vehicle_box(vehicle, x_center)
        box = (lo, hi)
        t_box, hit_box, axis = _ray_box(origin, rays, lo, hi)

    # shadow rays toward the sun from visible ground points
    shade = np.ones(dz.shape)
    if box is not None:
        idx = np.nonzero(ground & (t_ground < t_box))
        if idx[0].size:
            _, blocked, _ = _ray_box(gp[idx], np.broadcast_to(sun, (idx[0].size, 3)), *box)
            shade[idx] = np.where(blocked, SHADOW_KEEP, 1.0)

    ground_color = albedo * (light * shade)[..., None] * tint

    if environment.deposit_pct:
        coverage = MAX_WET_COVERAGE * environment.deposit_pct / 100.0
        cx = np.floor(gx / WET_CELL_M)
        cy = np.floor(gy / WET_CELL_M)
        wet = ground & on_road & (_hash_unit(cx, cy, rng_seed) < coverage)
        glossy = 0.65 * ground_color + 0.25 * sky * shade[..., None] + 8.0
        ground_color = np.where(wet[..., None], glossy, ground_color)

    vis_ground = ground & (t_ground <= t_box)
    img[vis_ground] = ground_color[vis_ground]

    if vehicle is not None:
        vis_box = hit_box & (t_box < t_ground)
        if np.any(vis_box):
            hp = origin + t_box[vis_box][:, None] * rays[vis_box]
            ax = axis[vis_box]
            normals = np.zeros((ax.size, 3))
            sign = np.where(rays[vis_box][np.arange(ax.size), ax] > 0, -1.0, 1.0)
            normals[np.arange(ax.size), ax] = sign
            diffuse = np.clip(normals @ sun, 0.0, None)
            body = np.array(vehicle.color_rgb, dtype=np.float64)
            color = np.broadcast_to(body, (ax.size, 3)).copy()
            if vehicle.category in ("car", "truck"):
                zrel = hp[:, 2] / vehicle.height_m
                glass = (ax != 2) & (zrel > 0.6) & (zrel < 0.92)
                color[glass] = GLASS
            lum = AMBIENT + (1 - AMBIENT) * diffuse
            lum = lum * (1.0 - 0.3 * environment.precipitation_pct / 100.0)
            img[vis_box] = color * lum[:, None] * tint

    _rain_streaks(img, environment.precipitation_pct, rng_seed, frame_index)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_frame(spec: EpisodeSpec, rig: CameraRig, t: float) -> Frame:
    """Render the episode's scene at time t (seconds since the vehicle entered)."""
    if not t >= 0:
        raise ValueError(f"render time must be non-negative, got {t}")
    frame_index = int(round(t * rig.fps))
    if spec.vehicle_visible(t):
        pixels = render_scene(rig, spec.environment, spec.rng_seed, frame_index, spec.vehicle, spec.vehicle_x(t))
    else:
        pixels = render_scene(rig, spec.environment, spec.rng_seed, frame_index)
    return Frame(pixels=pixels, frame_index=frame_index, timestamp_s=frame_index / rig.fps)


def iter_frames(spec: EpisodeSpec, rig: CameraRig):
    for k in range(spec.n_frames(rig)):
        yield render_frame(spec, rig, k / rig.fps)


def generate_episode(spec: EpisodeSpec, rig: CameraRig) -> Episode:
    n = spec.n_frames(rig)
    frames = list(iter_frames(spec, rig))
    return Episode(spec=spec, rig=rig, frames=frames, ground_truth=spec.ground_truth(n, rig.fps))
