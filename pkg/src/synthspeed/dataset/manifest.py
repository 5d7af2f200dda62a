"""On-disk episode layout, manifest serialisation and external ingestion.

Layout::

    <root>/manifest.json
    <root>/episodes/ep_00000/meta.json
    <root>/episodes/ep_00000/frames/000000.png
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from synthspeed.scenesynth.catalog import CATEGORIES, EnvironmentCondition

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
EPISODES_DIR = "episodes"

# normalisation bounds (30 and 100 km/h); speeds outside are flagged on ingest
RANGE_TOLERANCE_MPS = 0.01
_SPEED_LO = 30 / 3.6 - RANGE_TOLERANCE_MPS
_SPEED_HI = 100 / 3.6 + RANGE_TOLERANCE_MPS


class ManifestError(ValueError):
    pass


def episode_id(index: int) -> str:
    return f"ep_{index:05d}"


def frame_name(k: int) -> str:
    return f"{k:06d}.png"


@dataclass(frozen=True)
class EpisodeRecord:
    """One row of the manifest; mirrors the episode's meta.json."""

    episode_index: int
    speed_mps: float
    uniform_draw: float | None
    vehicle_name: str
    vehicle_category: str
    environment_label: str
    fps: float
    resolution: tuple[int, int]
    segment_length_m: float
    rng_seed: int | None
    n_frames: int
    out_of_range: bool = False

    @property
    def episode_id(self) -> str:
        return episode_id(self.episode_index)

    def meta_dict(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        del d["out_of_range"]
        return d

    def manifest_dict(self) -> dict:
        d = self.meta_dict()
        d["episode_id"] = self.episode_id
        if self.out_of_range:
            d["out_of_range"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        kw["resolution"] = tuple(kw["resolution"])
        return cls(**kw)


@dataclass(frozen=True)
class StoredEpisode:
    """An episode on disk: its record plus where the frames live."""

    record: EpisodeRecord
    directory: Path

    @property
    def episode_id(self) -> str:
        return self.record.episode_id

    @property
    def n_frames(self) -> int:
        return self.record.n_frames

    def frame_path(self, k: int) -> Path:
        return self.directory / "frames" / frame_name(k)

    def load_frame(self, k: int) -> np.ndarray:
        path = self.frame_path(k)
        if not path.is_file():
            raise FileNotFoundError(f"missing frame file {path} (episode {self.episode_id})")
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))


@dataclass
class DatasetManifest:
    root: Path
    episodes: list[EpisodeRecord]
    fps: float
    resolution: tuple[int, int]
    segment_length_m: float
    master_seed: int | None = None
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.root = Path(self.root)
        self.resolution = tuple(self.resolution)
        ids = [e.episode_id for e in self.episodes]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate episode ids in manifest")
        bad = [e.episode_id for e in self.episodes if e.n_frames < 1]
        if bad:
            raise ManifestError(f"episodes with no frames: {bad}")

    def __len__(self):
        return len(self.episodes)

    @property
    def ids(self) -> list[str]:
        return [e.episode_id for e in self.episodes]

    def record(self, eid: str) -> EpisodeRecord:
        for e in self.episodes:
            if e.episode_id == eid:
                return e
        raise KeyError(f"episode {eid!r} not in manifest")

    def episode(self, eid: str) -> StoredEpisode:
        return StoredEpisode(self.record(eid), self.root / EPISODES_DIR / eid)

    def stored(self, ids=None) -> list[StoredEpisode]:
        ids = self.ids if ids is None else ids
        return [self.episode(i) for i in ids]

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "fps": self.fps,
            "resolution": list(self.resolution),
            "segment_length_m": self.segment_length_m,
            "master_seed": self.master_seed,
            "episodes": [e.manifest_dict() for e in self.episodes],
        }

    def total_frames(self) -> int:
        return sum(e.n_frames for e in self.episodes)


def dumps(obj) -> str:
    """Canonical JSON used for every artifact we want byte-reproducible."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def write_manifest(manifest: DatasetManifest, root: Path | None = None) -> Path:
    path = Path(root or manifest.root) / MANIFEST_NAME
    write_json(path, manifest.to_dict())
    return path


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} under {root}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("format_version") != FORMAT_VERSION:
        raise ManifestError(f"unsupported manifest format_version {data.get('format_version')!r}")
    return DatasetManifest(
        root=root,
        episodes=[EpisodeRecord.from_dict(e) for e in data["episodes"]],
        fps=data["fps"],
        resolution=tuple(data["resolution"]),
        segment_length_m=data["segment_length_m"],
        master_seed=data.get("master_seed"),
    )


_META_TYPES = {
    "episode_index": int,
    "speed_mps": (int, float),
    "vehicle_name": str,
    "vehicle_category": str,
    "environment_label": str,
    "fps": (int, float),
    "resolution": list,
    "segment_length_m": (int, float),
    "n_frames": int,
}
_OPTIONAL_META = {"uniform_draw": (int, float), "rng_seed": int}


def _validate_meta(meta: dict) -> list[str]:
    problems = []
    for key, typ in _META_TYPES.items():
        if key not in meta:
            problems.append(f"missing field {key!r}")
        elif isinstance(meta[key], bool) or not isinstance(meta[key], typ):
            problems.append(f"field {key!r} has wrong type {type(meta[key]).__name__}")
    for key, typ in _OPTIONAL_META.items():
        if meta.get(key) is not None and (isinstance(meta[key], bool) or not isinstance(meta[key], typ)):
            problems.append(f"field {key!r} has wrong type {type(meta[key]).__name__}")
    if problems:
        return problems
    if meta["vehicle_category"] not in CATEGORIES:
        problems.append(f"unknown vehicle_category {meta['vehicle_category']!r}")
    try:
        EnvironmentCondition.from_label(meta["environment_label"])
    except ValueError as exc:
        problems.append(str(exc))
    if len(meta["resolution"]) != 2:
        problems.append("resolution must be [width, height]")
    if meta["n_frames"] < 1:
        problems.append("n_frames must be >= 1")
    if not (meta["fps"] > 0 and math.isfinite(meta["speed_mps"])):
        problems.append("fps must be positive and speed finite")
    return problems


def ingest_external(directory) -> DatasetManifest:
    """Build a manifest from per-episode meta.json files, validating as we go.

    Accepts output of generate_dataset as well as externally recorded
    simulator episodes in the same layout. Schema problems are collected over
    all episodes and reported together.
    """
    root = Path(directory)
    ep_root = root / EPISODES_DIR
    if not ep_root.is_dir():
        raise ManifestError(f"{root} has no {EPISODES_DIR}/ directory")

    records, problems = [], {}
    for ep_dir in sorted(p for p in ep_root.iterdir() if p.is_dir()):
        meta_path = ep_dir / "meta.json"
        if not meta_path.is_file():
            problems[ep_dir.name] = ["meta.json missing"]
            continue
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            problems[ep_dir.name] = [f"meta.json is not valid JSON ({exc})"]
            continue
        errs = _validate_meta(meta)
        if not errs and episode_id(meta["episode_index"]) != ep_dir.name:
            errs.append(f"directory name does not match episode_index {meta['episode_index']}")
        if errs:
            problems[ep_dir.name] = errs
            continue

        on_disk = len(list((ep_dir / "frames").glob("*.png")))
        if on_disk != meta["n_frames"]:
            problems[ep_dir.name] = [f"meta.json declares {meta['n_frames']} frames but {on_disk} are on disk"]
            continue

        meta = dict(meta)
        meta["environment_label"] = EnvironmentCondition.from_label(meta["environment_label"]).label()
        meta.setdefault("uniform_draw", None)
        meta.setdefault("rng_seed", None)
        rec = EpisodeRecord.from_dict(meta)
        if not _SPEED_LO <= rec.speed_mps <= _SPEED_HI:
            log.warning("episode %s speed %.3f m/s outside the normalisation range; target will be clamped",
                        rec.episode_id, rec.speed_mps)
            rec = EpisodeRecord.from_dict({**meta, "out_of_range": True})
        records.append(rec)

    if problems:
        lines = [f"  {eid}: {'; '.join(errs)}" for eid, errs in sorted(problems.items())]
        raise ManifestError("invalid episodes:\n" + "\n".join(lines))
    if not records:
        raise ManifestError(f"no episodes found under {ep_root}")

    header = {}
    if (root / MANIFEST_NAME).is_file():
        header = json.loads((root / MANIFEST_NAME).read_text(encoding="utf-8"))
    first = records[0]
    return DatasetManifest(
        root=root,
        episodes=records,
        fps=header.get("fps", first.fps),
        resolution=tuple(header.get("resolution", first.resolution)),
        segment_length_m=header.get("segment_length_m", first.segment_length_m),
        master_seed=header.get("master_seed"),
    )
