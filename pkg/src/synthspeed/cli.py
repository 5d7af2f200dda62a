"""Command-line pipeline: generate -> split -> train -> evaluate -> report.

Settings resolve in three layers: built-in defaults, then the JSON file given
with --config, then command-line flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from synthspeed.dataset import (
    ClipSet,
    ManifestError,
    NormalizationSpec,
    ingest_external,
    load_manifest,
    load_splits,
    save_splits,
    split_dataset,
)
from synthspeed.dataset.manifest import MANIFEST_NAME, write_json
from synthspeed.evaluation import DEFAULT_BINS, GROUPINGS, emit_report, evaluate, group_report
from synthspeed.models import build_model, canonical_kind, make_config
from synthspeed.scenesynth import CameraRig, draw_episode_spec, generate_dataset, iter_frames
from synthspeed.training import (
    CheckpointError,
    TrainConfig,
    TrainingDivergedError,
    checkpoint_id,
    load_checkpoint,
    read_history,
    train,
)

log = logging.getLogger("synthspeed")


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    n_episodes: int = 610
    master_seed: int = 0
    rig: dict = field(default_factory=dict)
    segment_length_m: float = 20.0
    record_to_horizon: bool = False
    horizon_frames: int | None = None
    workers: int = 1


@dataclass
class SplitsSection:
    ratios: list = field(default_factory=lambda: [0.6, 0.2, 0.2])
    seed: int = 0


@dataclass
class ModelSection:
    kind: str = "r3d18"
    config: dict = field(default_factory=dict)
    seed: int = 0


@dataclass
class EvaluationSection:
    groupings: list = field(default_factory=lambda: list(GROUPINGS))
    n_bins: int = DEFAULT_BINS


@dataclass
class PathsSection:
    dataset_root: str = "data"
    run_dir: str = "runs"


@dataclass
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    splits: SplitsSection = field(default_factory=SplitsSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: dict = field(default_factory=dict)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def validate(self):
        try:
            CameraRig(**self.dataset.rig)
        except TypeError as exc:
            raise ConfigError(f"dataset.rig: {exc}") from None
        if self.dataset.n_episodes < 1:
            raise ConfigError("dataset.n_episodes must be >= 1")
        kind = canonical_kind(self.model.kind)
        make_config(kind, self.model.config)
        TrainConfig.for_model(kind, **self.training)
        unknown = set(self.evaluation.groupings) - set(GROUPINGS)
        if unknown:
            raise ConfigError(f"evaluation.groupings: unknown {sorted(unknown)}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


def load_config(path=None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    training = data.get("training", {})
    if not isinstance(training, dict):
        raise ConfigError("training must be a mapping")
    return RunConfig(
        dataset=_section(DatasetSection, data.get("dataset", {}), "dataset"),
        splits=_section(SplitsSection, data.get("splits", {}), "splits"),
        model=_section(ModelSection, data.get("model", {}), "model"),
        training=dict(training),
        evaluation=_section(EvaluationSection, data.get("evaluation", {}), "evaluation"),
        paths=_section(PathsSection, data.get("paths", {}), "paths"),
    )


def _parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must look like 96x54, got {text!r}") from None


def _log_resolved(cfg: RunConfig, stage: str):
    run_dir = Path(cfg.paths.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / f"resolved_config.{stage}.json", cfg.to_dict())


def _manifest(cfg: RunConfig):
    root = Path(cfg.paths.dataset_root)
    if (root / MANIFEST_NAME).is_file():
        return load_manifest(root)
    return ingest_external(root)


def _splits_path(cfg: RunConfig) -> Path:
    return Path(cfg.paths.run_dir) / "splits.json"


def _rig(cfg: RunConfig) -> CameraRig:
    return CameraRig(**cfg.dataset.rig)


# ---------------------------------------------------------------- stages

def cmd_generate(cfg: RunConfig, args) -> Path:
    rig = _rig(cfg)
    root = Path(cfg.paths.dataset_root)

    def progress(done, total, rec):
        print(f"[{done}/{total}] {rec.episode_id} {rec.vehicle_name} {rec.environment_label} "
              f"{rec.speed_mps:.2f} m/s {rec.n_frames} frames", flush=True)

    manifest = generate_dataset(
        cfg.dataset.n_episodes, rig, cfg.dataset.master_seed, root,
        segment_length_m=cfg.dataset.segment_length_m,
        record_to_horizon=cfg.dataset.record_to_horizon,
        workers=cfg.dataset.workers,
        overwrite=args.overwrite,
        progress=progress,
    )
    path = root / MANIFEST_NAME
    print(f"wrote {len(manifest)} episodes ({manifest.total_frames()} frames) to {path}")
    return path


def cmd_split(cfg: RunConfig, args) -> Path:
    manifest = _manifest(cfg)
    split = split_dataset(manifest, cfg.splits.ratios, cfg.splits.seed)
    path = save_splits(split, _splits_path(cfg))
    n_tr, n_va, n_te = split.sizes
    print(f"split {len(manifest)} episodes into train {n_tr} / val {n_va} / test {n_te}: {path}")
    return path


def _clipsets(cfg, manifest, model_config, ids_list):
    return [
        ClipSet(manifest.stored(ids), model_config.n_steps, cfg.dataset.horizon_frames,
                NormalizationSpec(), size=model_config.input_hw)
        for ids in ids_list
    ]


def _require_splits(cfg):
    path = _splits_path(cfg)
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found; run the split stage first")
    return load_splits(path)


def cmd_train(cfg: RunConfig, args) -> Path:
    kind = canonical_kind(cfg.model.kind)
    manifest = _manifest(cfg)
    split = _require_splits(cfg)
    model_config = make_config(kind, cfg.model.config)
    tcfg = TrainConfig.for_model(kind, **cfg.training)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run = Path(cfg.paths.run_dir) / f"train_{kind}_{stamp}_s{tcfg.seed}"
    tr, va = _clipsets(cfg, manifest, model_config, [split.train, split.val])
    model = build_model(kind, model_config, seed=cfg.model.seed)

    def on_epoch(epoch, tl, vl):
        print(f"epoch {epoch:3d}  train_loss {tl:.5f}  val_loss {vl:.5f}", flush=True)

    try:
        _, history = train(model, tr, va, tcfg, run_dir=run, on_epoch=on_epoch)
    except BaseException:
        shutil.rmtree(run, ignore_errors=True)
        raise
    print(f"best epoch {history.best_epoch} of {history.stopped_epoch}; checkpoint {run / 'best.ckpt'}")
    return run / "best.ckpt"


def cmd_evaluate(cfg: RunConfig, args) -> Path:
    ckpt = Path(args.checkpoint)
    model = load_checkpoint(ckpt)
    if args.clip_frames is not None and args.clip_frames != model.config.n_steps:
        raise ValueError(f"--clip-frames {args.clip_frames} does not match the {model.kind} checkpoint, "
                         f"which expects {model.config.n_steps} timesteps")
    manifest = _manifest(cfg)
    split = _require_splits(cfg)
    (test,) = _clipsets(cfg, manifest, model.config, [split.test])
    out = Path(args.out) if args.out else ckpt.parent / "eval"
    mae, errors = evaluate(model, test, model.norm)
    reports = {by: group_report(errors, manifest, by, cfg.evaluation.n_bins) for by in cfg.evaluation.groupings}
    history_path = ckpt.parent / "history.csv"
    history = read_history(history_path) if history_path.is_file() else None
    try:
        emit_report(reports, errors, out, model_kind=model.kind, checkpoint_id=checkpoint_id(model), history=history)
    except BaseException:
        shutil.rmtree(out, ignore_errors=True)
        raise
    print(f"{model.kind}: test MAE {mae:.3f} m/s over {len(errors)} episodes -> {out / 'summary.json'}")
    return out / "summary.json"


def cmd_report(cfg: RunConfig, args) -> Path:
    summaries = []
    for item in args.inputs:
        p = Path(item)
        if p.is_dir():
            p = p / "summary.json"
        elif p.suffix == ".ckpt":
            p = p.parent / "eval" / "summary.json"
        if not p.is_file():
            raise FileNotFoundError(f"{p} not found; run the evaluate stage for {item} first")
        s = json.loads(p.read_text(encoding="utf-8"))
        s["source"] = str(p)
        summaries.append(s)
    out = Path(cfg.paths.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "comparison.json", summaries)
    lines = ["model_kind,overall_mae_mps,rmse_mps,n_test,checkpoint_id"]
    lines += [f"{s['model_kind']},{s['overall_mae_mps']!r},{s['rmse_mps']!r},{s['n_test']},{s['checkpoint_id']}"
              for s in summaries]
    (out / "comparison.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{'model':<10} {'MAE m/s':>8} {'RMSE m/s':>9} {'n_test':>7}")
    for s in summaries:
        print(f"{s['model_kind']:<10} {s['overall_mae_mps']:>8.3f} {s['rmse_mps']:>9.3f} {s['n_test']:>7d}")
    return out / "comparison.csv"


def cmd_preview(cfg: RunConfig, args) -> Path:
    from PIL import Image

    rig = _rig(cfg)
    spec = draw_episode_spec(cfg.dataset.master_seed, args.episode_index,
                             cfg.dataset.segment_length_m, cfg.dataset.record_to_horizon)
    out = Path(args.out or Path(cfg.paths.run_dir) / f"preview_{args.episode_index:05d}")
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for frame in iter_frames(spec, rig):
        if frame.frame_index % args.every == 0:
            Image.fromarray(frame.pixels).save(out / f"{frame.frame_index:06d}.png")
            n += 1
    print(f"episode {args.episode_index}: {spec.vehicle.name}, {spec.environment.label()}, "
          f"{spec.speed_mps:.2f} m/s; wrote {n} frames to {out}")
    return out


COMMANDS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "preview": cmd_preview,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for this stage (master, split or training seed)")
    common.add_argument("--run-dir", help="directory for stage outputs")
    common.add_argument("--dataset-root", help="dataset directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="synthspeed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="render a synthetic dataset")
    p.add_argument("--episodes", type=int)
    p.add_argument("--resolution", type=_parse_resolution, help="WIDTHxHEIGHT, e.g. 96x54")
    p.add_argument("--fps", type=float)
    p.add_argument("--segment-length", type=float)
    p.add_argument("--record-to-horizon", action="store_true", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--overwrite", action="store_true", help="replace a non-empty dataset directory")

    sub.add_parser("split", parents=[common], help="write train/val/test splits")

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--model", choices=["r3d18", "cnn-gru", "cnn_gru"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clip-frames", type=int, help="expected clip length; must match the checkpoint")
    p.add_argument("--out", help="output directory (default: <checkpoint dir>/eval)")

    p = sub.add_parser("report", parents=[common], help="side-by-side summary of evaluated checkpoints")
    p.add_argument("inputs", nargs="+", help="checkpoints, eval directories or summary.json files")

    p = sub.add_parser("preview", parents=[common], help="render one episode's frames for inspection")
    p.add_argument("--episode-index", type=int, default=0)
    p.add_argument("--resolution", type=_parse_resolution)
    p.add_argument("--every", type=int, default=1, help="keep every k-th frame")
    p.add_argument("--out")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.run_dir:
        cfg.paths.run_dir = args.run_dir
    if args.dataset_root:
        cfg.paths.dataset_root = args.dataset_root
    cmd = args.command
    if cmd in ("generate", "preview"):
        if args.seed is not None:
            cfg.dataset.master_seed = args.seed
        if args.resolution:
            cfg.dataset.rig["width_px"], cfg.dataset.rig["height_px"] = args.resolution
    if cmd == "generate":
        for flag, key in (("episodes", "n_episodes"), ("segment_length", "segment_length_m"),
                          ("workers", "workers"), ("record_to_horizon", "record_to_horizon")):
            if getattr(args, flag) is not None:
                setattr(cfg.dataset, key, getattr(args, flag))
        if args.fps is not None:
            cfg.dataset.rig["fps"] = args.fps
    elif cmd == "split" and args.seed is not None:
        cfg.splits.seed = args.seed
    elif cmd == "train":
        if args.model:
            cfg.model.kind = args.model
        kind = canonical_kind(cfg.model.kind)
        cfg.model.kind = kind
        if args.seed is not None:
            cfg.training["seed"] = args.seed
        if args.epochs is not None:
            cfg.training["max_epochs"] = args.epochs
        if args.patience is not None:
            cfg.training["early_stop_patience"] = args.patience
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        _log_resolved(cfg, args.command)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, ManifestError, CheckpointError, TrainingDivergedError,
            FileNotFoundError, FileExistsError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
