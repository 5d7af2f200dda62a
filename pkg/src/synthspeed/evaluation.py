"""Per-episode test errors, grouped error tables and report files."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from synthspeed.dataset.clips import NormalizationSpec, denormalize_speed
from synthspeed.dataset.manifest import DatasetManifest, write_json
from synthspeed.scenesynth.catalog import CATEGORIES, SUN_ELEVATIONS_DEG, VEHICLE_CATALOG, environment_grid
from synthspeed.scenesynth.episode import SPEED_MAX_MPS, SPEED_MIN_MPS

DEFAULT_BINS = 10
REPORT_FILES = {
    "vehicle": "report_vehicle.csv",
    "category": "report_category.csv",
    "environment": "report_environment.csv",
    "sun": "report_sun.csv",
    "speed_bin": "report_speedbin.csv",
}
GROUPINGS = tuple(REPORT_FILES)
CSV_COLUMNS = ("group_key", "mae_mps", "n_episodes", "mean_speed_mps")


@dataclass(frozen=True)
class EpisodeError:
    episode_id: str
    true_speed_mps: float
    predicted_speed_mps: float

    @property
    def abs_error_mps(self) -> float:
        return abs(self.true_speed_mps - self.predicted_speed_mps)


@dataclass(frozen=True)
class GroupRow:
    group_key: str
    mae_mps: float
    n_episodes: int
    mean_speed_mps: float


@dataclass(frozen=True)
class GroupReport:
    by: str
    rows: tuple[GroupRow, ...]
    omitted: tuple[str, ...] = field(default=(), compare=False)

    @property
    def n_episodes(self) -> int:
        return sum(r.n_episodes for r in self.rows)

    def weighted_mae(self) -> float:
        return sum(r.mae_mps * r.n_episodes for r in self.rows) / self.n_episodes

    def row(self, key: str) -> GroupRow:
        for r in self.rows:
            if r.group_key == key:
                return r
        raise KeyError(key)


def overall_mae(errors) -> float:
    return float(np.mean([e.abs_error_mps for e in errors]))


def overall_rmse(errors) -> float:
    return math.sqrt(float(np.mean([e.abs_error_mps ** 2 for e in errors])))


def evaluate(model, test_clips, norm: NormalizationSpec | None = None, batch_size: int = 8):
    """Score every test clip; returns (MAE in m/s, errors sorted by episode id).

    model is either a regressor from synthspeed.models or any callable mapping
    a ClipSample to a speed in m/s.
    """
    if len(test_clips) == 0:
        raise ValueError("test split is empty")
    from torch import nn

    errors = []
    if isinstance(model, nn.Module):
        from synthspeed.models import predict_normalized

        norm = norm or getattr(model, "norm", None) or NormalizationSpec()
        expected = model.config.n_steps
        for start in range(0, len(test_clips), batch_size):
            clips = [test_clips[i] for i in range(start, min(start + batch_size, len(test_clips)))]
            for c in clips:
                if c.n_steps != expected:
                    raise ValueError(f"clip {c.episode_id} has {c.n_steps} timesteps; {model.kind} expects {expected}")
            y = predict_normalized(model, np.stack([c.frames for c in clips]))
            for c, yi in zip(clips, y):
                errors.append(EpisodeError(c.episode_id, c.speed_mps, float(denormalize_speed(yi, norm))))
    else:
        for i in range(len(test_clips)):
            c = test_clips[i]
            errors.append(EpisodeError(c.episode_id, c.speed_mps, float(model(c))))
    errors.sort(key=lambda e: e.episode_id)
    return overall_mae(errors), errors


def speed_bin_edges(n_bins: int = DEFAULT_BINS, lo: float = SPEED_MIN_MPS, hi: float = SPEED_MAX_MPS) -> np.ndarray:
    return np.linspace(lo, hi, n_bins + 1)


def speed_bin_key(v: float, edges: np.ndarray) -> str:
    i = int(np.searchsorted(edges, v, side="right")) - 1
    i = min(max(i, 0), len(edges) - 2)
    return f"{edges[i]:05.2f}-{edges[i + 1]:05.2f}"


def _key_fn(by: str, n_bins: int):
    if by == "vehicle":
        return lambda rec: rec.vehicle_name
    if by == "category":
        return lambda rec: rec.vehicle_category
    if by == "environment":
        return lambda rec: rec.environment_label
    if by == "sun":
        return lambda rec: rec.environment_label.split("_")[0]
    if by == "speed_bin":
        edges = speed_bin_edges(n_bins)
        return lambda rec: speed_bin_key(rec.speed_mps, edges)
    raise ValueError(f"unknown grouping {by!r}; choose from {GROUPINGS}")


def _all_keys(by: str, n_bins: int) -> set[str]:
    if by == "vehicle":
        return {v.name for v in VEHICLE_CATALOG}
    if by == "category":
        return set(CATEGORIES)
    if by == "environment":
        return {e.label() for e in environment_grid()}
    if by == "sun":
        return set(SUN_ELEVATIONS_DEG)
    edges = speed_bin_edges(n_bins)
    return {speed_bin_key((a + b) / 2, edges) for a, b in zip(edges, edges[1:])}


def group_report(errors, manifest: DatasetManifest, by: str, n_bins: int = DEFAULT_BINS) -> GroupReport:
    """Aggregate per-episode errors by vehicle, category, environment, sun or speed bin.

    Groups with no test episodes are left out of the rows and listed in
    ``omitted``.
    """
    key_of = _key_fn(by, n_bins)
    groups = defaultdict(list)
    for e in errors:
        rec = manifest.record(e.episode_id)
        groups[key_of(rec)].append((e.abs_error_mps, rec.speed_mps))
    rows = tuple(
        GroupRow(
            group_key=k,
            mae_mps=float(np.mean([a for a, _ in groups[k]])),
            n_episodes=len(groups[k]),
            mean_speed_mps=float(np.mean([v for _, v in groups[k]])),
        )
        for k in sorted(groups)
    )
    omitted = tuple(sorted(_all_keys(by, n_bins) - set(groups)))
    return GroupReport(by, rows, omitted)


def write_group_csv(report: GroupReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.rows:
            w.writerow([r.group_key, repr(r.mae_mps), r.n_episodes, repr(r.mean_speed_mps)])
    return path


def read_group_csv(path, by: str) -> GroupReport:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = tuple(
            GroupRow(row["group_key"], float(row["mae_mps"]), int(row["n_episodes"]), float(row["mean_speed_mps"]))
            for row in csv.DictReader(fh)
        )
    return GroupReport(by, rows)


def write_errors_csv(errors, path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode_id", "true_speed_mps", "predicted_speed_mps", "abs_error_mps"])
        for e in errors:
            w.writerow([e.episode_id, repr(e.true_speed_mps), repr(e.predicted_speed_mps), repr(e.abs_error_mps)])
    return Path(path)


def _plot_loss(history, path):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(history.train_loss) + 1)
    ax.plot(epochs, history.train_loss, label="train")
    ax.plot(epochs, history.val_loss, label="validation")
    if history.best_epoch:
        ax.axvline(history.best_epoch, color="grey", ls="--", lw=0.8, label=f"best epoch {history.best_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (normalised target)")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_groups(report: GroupReport, path):
    import matplotlib.pyplot as plt

    keys = [r.group_key for r in report.rows]
    fig, ax = plt.subplots(figsize=(max(5, 0.35 * len(keys) + 2), 4))
    ax.bar(range(len(keys)), [r.mae_mps for r in report.rows], color="tab:blue")
    for i, r in enumerate(report.rows):
        ax.annotate(f"n={r.n_episodes}\n{r.mean_speed_mps:.1f} m/s", (i, r.mae_mps), ha="center",
                    va="bottom", fontsize=6)
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=70, ha="right", fontsize=7)
    ax.set_ylabel("MAE (m/s)")
    ax.set_title(f"speed error by {report.by}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_error_vs_speed(errors, speed_report: GroupReport | None, path):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([e.true_speed_mps for e in errors], [e.abs_error_mps for e in errors], s=10, label="episode")
    if speed_report is not None:
        centres = [sum(map(float, r.group_key.split("-"))) / 2 for r in speed_report.rows]
        ax.plot(centres, [r.mae_mps for r in speed_report.rows], "o-", color="tab:red", label="bin MAE")
    ax.set_xlabel("true speed (m/s)")
    ax.set_ylabel("absolute error (m/s)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(reports: dict, errors, out_dir, *, model_kind: str, checkpoint_id: str | None = None,
                history=None, plots: bool = True) -> dict:
    """Write CSV tables, summary.json and plots; returns {name: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for by, rep in sorted(reports.items()):
        written[REPORT_FILES[by]] = write_group_csv(rep, out / REPORT_FILES[by])
    written["episodes.csv"] = write_errors_csv(errors, out / "episodes.csv")
    summary = {
        "model_kind": model_kind,
        "overall_mae_mps": overall_mae(errors),
        "rmse_mps": overall_rmse(errors),
        "n_test": len(errors),
        "checkpoint_id": checkpoint_id,
        "omitted_groups": {by: list(rep.omitted) for by, rep in sorted(reports.items()) if rep.omitted},
    }
    written["summary.json"] = out / "summary.json"
    write_json(written["summary.json"], summary)

    if plots:
        import matplotlib

        matplotlib.use("Agg")
        if history is not None and history.train_loss:
            written["loss_curve.png"] = out / "loss_curve.png"
            _plot_loss(history, written["loss_curve.png"])
        for by, rep in sorted(reports.items()):
            name = f"error_by_{by}.png"
            _plot_groups(rep, out / name)
            written[name] = out / name
        written["error_vs_speed.png"] = out / "error_vs_speed.png"
        _plot_error_vs_speed(errors, reports.get("speed_bin"), written["error_vs_speed.png"])
    return written
