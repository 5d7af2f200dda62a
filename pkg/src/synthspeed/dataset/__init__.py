"""Episode storage, ingestion, splits, target normalisation and clip sampling."""

from synthspeed.dataset.manifest import (
    DatasetManifest,
    EpisodeRecord,
    ManifestError,
    StoredEpisode,
    episode_id,
    ingest_external,
    load_manifest,
    write_manifest,
)
from synthspeed.dataset.splits import SplitAssignment, load_splits, save_splits, split_dataset, split_sizes
from synthspeed.dataset.clips import (
    ClipSample,
    ClipSet,
    NormalizationSpec,
    SpeedRangeWarning,
    clip_indices,
    denormalize_speed,
    normalize_speed,
    sample_clip,
)

__all__ = [
    "DatasetManifest", "EpisodeRecord", "ManifestError", "StoredEpisode", "episode_id",
    "ingest_external", "load_manifest", "write_manifest",
    "SplitAssignment", "load_splits", "save_splits", "split_dataset", "split_sizes",
    "ClipSample", "ClipSet", "NormalizationSpec", "SpeedRangeWarning", "clip_indices",
    "denormalize_speed", "normalize_speed", "sample_clip",
]
