"""Target normalisation and fixed-horizon clip extraction."""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from PIL import Image

from synthspeed.dataset.manifest import RANGE_TOLERANCE_MPS, StoredEpisode
from synthspeed.scenesynth.episode import Episode, default_horizon_frames


class SpeedRangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NormalizationSpec:
    v_min: float = 30 / 3.6
    v_max: float = 100 / 3.6

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ValueError(f"v_min must be below v_max, got {self.v_min} >= {self.v_max}")

    def to_dict(self) -> dict:
        return {"v_min": self.v_min, "v_max": self.v_max}


def normalize_speed(v: float, spec: NormalizationSpec = NormalizationSpec()) -> float:
    """Affine map [v_min, v_max] -> [-1, 1].

    The speed law's lower bound (8.33 m/s) sits a hair under 30 km/h, so speeds
    within RANGE_TOLERANCE_MPS of the bounds map without clamping; anything
    further out is clamped to the nearest bound with a SpeedRangeWarning.
    """
    span = spec.v_max - spec.v_min
    if span <= 0:
        raise ValueError("degenerate normalisation range")
    if v < spec.v_min - RANGE_TOLERANCE_MPS or v > spec.v_max + RANGE_TOLERANCE_MPS:
        warnings.warn(f"speed {v:.4f} m/s outside [{spec.v_min:.4f}, {spec.v_max:.4f}]; clamped",
                      SpeedRangeWarning, stacklevel=2)
        v = min(max(v, spec.v_min), spec.v_max)
    return 2.0 * (v - spec.v_min) / span - 1.0


def denormalize_speed(y, spec: NormalizationSpec = NormalizationSpec()):
    return (y + 1.0) * (spec.v_max - spec.v_min) / 2.0 + spec.v_min


def clip_indices(n_frames: int, n_steps: int, horizon_frames: int) -> list[int]:
    """Evenly spaced frame indices over a fixed horizon, clamped to the recording.

    idx_k = round_half_up(k * (horizon - 1) / (N - 1)), then min(idx_k, n_frames - 1).
    """
    if n_steps < 2:
        raise ValueError(f"need at least 2 timesteps, got {n_steps}")
    if horizon_frames < n_steps:
        raise ValueError(f"horizon ({horizon_frames}) shorter than the clip length ({n_steps})")
    if n_frames < 1:
        raise ValueError("episode has no frames")
    den = n_steps - 1
    # integer round-half-up of k*(h-1)/den
    return [min((2 * k * (horizon_frames - 1) + den) // (2 * den), n_frames - 1) for k in range(n_steps)]


@dataclass(frozen=True)
class ClipSample:
    frames: np.ndarray  # (N, H, W, 3) uint8
    target: float
    episode_id: str
    speed_mps: float
    horizon_frames: int

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0]


def _resize(img: np.ndarray, size) -> np.ndarray:
    if size is None or tuple(img.shape[:2]) == tuple(size):
        return img
    h, w = size
    return np.asarray(Image.fromarray(img).resize((w, h), Image.BILINEAR))


def sample_clip(
    episode,
    n_steps: int,
    horizon_frames: int | None = None,
    norm: NormalizationSpec = NormalizationSpec(),
    size: tuple[int, int] | None = None,
) -> ClipSample:
    """Gather one clip from a stored (on-disk) or in-memory episode.

    size is the (height, width) each frame is resized to; None keeps the
    rendered resolution.
    """
    if isinstance(episode, Episode):
        n_frames, fps = episode.n_frames, episode.rig.fps
        seg, speed = episode.spec.segment_length_m, episode.spec.speed_mps
        eid = f"ep_{episode.spec.episode_index:05d}"
        load = lambda k: episode.frames[k].pixels  # noqa: E731
    elif isinstance(episode, StoredEpisode):
        rec = episode.record
        n_frames, fps, seg, speed, eid = rec.n_frames, rec.fps, rec.segment_length_m, rec.speed_mps, rec.episode_id
        load = episode.load_frame
    else:
        raise TypeError(f"cannot sample a clip from {type(episode).__name__}")

    if horizon_frames is None:
        horizon_frames = default_horizon_frames(seg, fps)
    idx = clip_indices(n_frames, n_steps, horizon_frames)
    cache = {}
    stack = []
    for k in idx:
        if k not in cache:
            cache[k] = _resize(load(k), size)
        stack.append(cache[k])
    return ClipSample(
        frames=np.stack(stack),
        target=normalize_speed(speed, norm),
        episode_id=eid,
        speed_mps=speed,
        horizon_frames=horizon_frames,
    )


class ClipSet(Sequence):
    """Lazy, optionally cached, sequence of clips for a list of episodes."""

    def __init__(self, episodes, n_steps, horizon_frames=None, norm=NormalizationSpec(), size=None, cache=True):
        self.episodes = list(episodes)
        self.n_steps = n_steps
        self.horizon_frames = horizon_frames
        self.norm = norm
        self.size = size
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.episodes)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        clip = sample_clip(self.episodes[i], self.n_steps, self.horizon_frames, self.norm, self.size)
        if self._cache is not None:
            self._cache[i] = clip
        return clip
