from __future__ import annotations

import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np
from PIL import Image

from synthspeed.scenesynth.camera import CameraRig
from synthspeed.scenesynth.catalog import VEHICLE_CATALOG, environment_grid
from synthspeed.scenesynth.episode import DEFAULT_SEGMENT_M, EpisodeSpec, sample_speed
from synthspeed.scenesynth.render import iter_frames

_GRID = environment_grid()


def draw_episode_spec(
    master_seed: int,
    index: int,
    segment_length_m: float = DEFAULT_SEGMENT_M,
    record_to_horizon: bool = False,
) -> EpisodeSpec:
    """Draw speed, vehicle and environment for episode `index`.

    Each episode gets its own generator keyed on (master_seed, index), so any
    subset of episodes can be regenerated independently and in any order.
    """
    if master_seed < 0:
        raise ValueError(f"master_seed must be non-negative, got {master_seed}")
    rng = np.random.default_rng([master_seed, index])
    draw = sample_speed(rng)
    vehicle = VEHICLE_CATALOG[int(rng.integers(len(VEHICLE_CATALOG)))]
    environment = _GRID[int(rng.integers(len(_GRID)))]
    return EpisodeSpec(
        episode_index=index,
        uniform_draw=draw.uniform_draw,
        vehicle=vehicle,
        environment=environment,
        rng_seed=int(rng.integers(2**31)),
        segment_length_m=segment_length_m,
        record_to_horizon=record_to_horizon,
    )


def write_episode(spec: EpisodeSpec, rig: CameraRig, root: Path):
    from synthspeed.dataset.manifest import EPISODES_DIR, EpisodeRecord, episode_id, frame_name, write_json

    ep_dir = Path(root) / EPISODES_DIR / episode_id(spec.episode_index)
    frames_dir = ep_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=False)
    n = 0
    for frame in iter_frames(spec, rig):
        Image.fromarray(frame.pixels).save(frames_dir / frame_name(frame.frame_index), format="PNG")
        n += 1
    record = EpisodeRecord(
        episode_index=spec.episode_index,
        speed_mps=spec.speed_mps,
        uniform_draw=spec.uniform_draw,
        vehicle_name=spec.vehicle.name,
        vehicle_category=spec.vehicle.category,
        environment_label=spec.environment.label(),
        fps=rig.fps,
        resolution=rig.resolution,
        segment_length_m=spec.segment_length_m,
        rng_seed=spec.rng_seed,
        n_frames=n,
    )
    write_json(ep_dir / "meta.json", record.meta_dict())
    return record


def _generate_one(index, *, master_seed, rig, root, segment_length_m, record_to_horizon):
    spec = draw_episode_spec(master_seed, index, segment_length_m, record_to_horizon)
    return write_episode(spec, rig, root)


def generate_dataset(
    n_episodes: int,
    rig: CameraRig,
    master_seed: int,
    output_dir,
    *,
    segment_length_m: float = DEFAULT_SEGMENT_M,
    record_to_horizon: bool = False,
    workers: int = 1,
    overwrite: bool = False,
    progress=None,
):
    """Render n_episodes to output_dir and write the manifest.

    Output is assembled in a hidden sibling directory and moved into place only
    once complete, so a failure never leaves a half-written dataset behind.
    progress, if given, is called as progress(done, total, record).
    """
    from synthspeed.dataset.manifest import DatasetManifest, write_manifest

    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    if segment_length_m <= 0:
        raise ValueError(f"segment_length_m must be positive, got {segment_length_m}")
    out = Path(output_dir)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise FileExistsError(f"{out} is not empty (pass overwrite=True to replace it)")

    tmp = out.parent / f".{out.name}.partial-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    job = partial(_generate_one, master_seed=master_seed, rig=rig, root=tmp,
                  segment_length_m=segment_length_m, record_to_horizon=record_to_horizon)
    records = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for rec in pool.map(job, range(n_episodes), chunksize=4):
                    records.append(rec)
                    if progress:
                        progress(len(records), n_episodes, rec)
        else:
            for i in range(n_episodes):
                records.append(job(i))
                if progress:
                    progress(len(records), n_episodes, records[-1])
        manifest = DatasetManifest(
            root=out,
            episodes=records,
            fps=rig.fps,
            resolution=rig.resolution,
            segment_length_m=segment_length_m,
            master_seed=master_seed,
        )
        write_manifest(manifest, tmp)
        if out.exists():
            shutil.rmtree(out)
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest
