from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from synthspeed.dataset.manifest import DatasetManifest, write_json

DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    seed: int = 0

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split subsets overlap")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)

    def all_ids(self) -> set[str]:
        return set(self.train) | set(self.val) | set(self.test)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitAssignment":
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]), tuple(d["ratios"]), d["seed"])


def split_sizes(n: int, ratios=DEFAULT_RATIOS) -> tuple[int, int, int]:
    """floor(r_train * n), floor(r_val * n), remainder."""
    n_train = math.floor(round(ratios[0] * n, 9))
    n_val = math.floor(round(ratios[1] * n, 9))
    return n_train, n_val, n - n_train - n_val


def split_dataset(manifest: DatasetManifest, ratios=DEFAULT_RATIOS, seed: int = 0) -> SplitAssignment:
    if len(manifest) == 0:
        raise ValueError("cannot split an empty manifest")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    ids = sorted(manifest.ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train, n_val, _ = split_sizes(len(ids), ratios)
    return SplitAssignment(
        train=tuple(sorted(shuffled[:n_train])),
        val=tuple(sorted(shuffled[n_train:n_train + n_val])),
        test=tuple(sorted(shuffled[n_train + n_val:])),
        ratios=ratios,
        seed=seed,
    )


def save_splits(split: SplitAssignment, path) -> Path:
    path = Path(path)
    write_json(path, split.to_dict())
    return path


def load_splits(path) -> SplitAssignment:
    return SplitAssignment.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
