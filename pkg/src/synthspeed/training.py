"""Adam/MSE training loop with patience-based early stopping and checkpoints."""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from synthspeed.dataset.clips import NormalizationSpec
from synthspeed.dataset.manifest import write_json
from synthspeed.models import build_model, canonical_kind, config_dict, make_config

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

_DEFAULTS = {
    "r3d18": dict(learning_rate=3e-4, batch_size=5, max_epochs=100, early_stop_patience=7),
    "cnn_gru": dict(learning_rate=1e-4, batch_size=3, max_epochs=150, early_stop_patience=None),
}


class TrainingDivergedError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model_kind: str = "r3d18"
    learning_rate: float = 3e-4
    batch_size: int = 5
    max_epochs: int = 100
    early_stop_patience: int | None = 7
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model_kind", canonical_kind(self.model_kind))
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1 when set")

    @classmethod
    def for_model(cls, kind: str, **overrides) -> "TrainConfig":
        kind = canonical_kind(kind)
        return cls(model_kind=kind, **{**_DEFAULTS[kind], **overrides})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(loss="mse", optimizer="adam", adam_betas=list(ADAM_BETAS), adam_eps=ADAM_EPS)
        return d


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    wall_time_s: float = 0.0

    def rows(self):
        return [(i + 1, tr, va) for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss))]


class StopDecision(NamedTuple):
    stop: bool
    best_epoch: int  # 1-based


def early_stop_check(val_losses, patience: int | None) -> StopDecision:
    """Stop once `patience` epochs have passed without a strictly lower val loss."""
    if len(val_losses) == 0:
        raise ValueError("no validation losses yet")
    best = int(np.argmin(val_losses)) + 1  # argmin keeps the first minimum
    if patience is None:
        return StopDecision(False, best)
    return StopDecision(len(val_losses) - best >= patience, best)


def _batches(n, batch_size, order):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _stack(clips, idx):
    frames = np.stack([clips[i].frames for i in idx])
    targets = torch.tensor([[clips[i].target] for i in idx], dtype=torch.float32)
    return frames, targets


@torch.no_grad()
def mean_squared_error(model: nn.Module, clips, batch_size: int = 8) -> float:
    model.eval()
    total = 0.0
    for idx in _batches(len(clips), batch_size, np.arange(len(clips))):
        frames, targets = _stack(clips, idx)
        pred = model(model.prepare(frames))
        total += float(((pred - targets) ** 2).sum())
    return total / len(clips)


def train(model: nn.Module, train_clips, val_clips, config: TrainConfig, run_dir=None,
          norm: NormalizationSpec = NormalizationSpec(), on_epoch=None):
    """Fit model to the clips and return (model, history).

    The returned model carries the parameters of the best validation epoch.
    With run_dir set, writes history.csv, config.json and best.ckpt there.
    on_epoch(epoch, train_loss, val_loss) is called after every epoch.
    """
    if len(train_clips) == 0 or len(val_clips) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if canonical_kind(model.kind) != config.model_kind:
        raise ValueError(f"config is for {config.model_kind} but the model is {model.kind}")
    n_steps = model.config.n_steps
    if train_clips[0].n_steps != n_steps or val_clips[0].n_steps != n_steps:
        raise ValueError(f"clips must have {n_steps} timesteps for {model.kind}")

    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        write_json(run_dir / "config.json", {
            "train": config.to_dict(),
            "model": {"kind": model.kind, **config_dict(model.config)},
            "norm": norm.to_dict(),
            "n_train": len(train_clips),
            "n_val": len(val_clips),
        })

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS)
    loss_fn = nn.MSELoss()
    history = TrainHistory()
    best_state, best_val = None, math.inf
    t0 = time.perf_counter()

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        for epoch in range(1, config.max_epochs + 1):
            model.train()
            order = np.random.default_rng([config.seed, epoch]).permutation(len(train_clips))
            running = 0.0
            for b, idx in enumerate(_batches(len(train_clips), config.batch_size, order)):
                frames, targets = _stack(train_clips, idx)
                optimizer.zero_grad(set_to_none=True)
                loss = loss_fn(model(model.prepare(frames)), targets)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {b}")
                loss.backward()
                optimizer.step()
                running += loss.item() * len(idx)
            train_loss = running / len(train_clips)
            val_loss = mean_squared_error(model, val_clips)
            history.train_loss.append(train_loss)
            history.val_loss.append(val_loss)
            history.stopped_epoch = epoch
            log.info("epoch %d train_loss %.5f val_loss %.5f", epoch, train_loss, val_loss)
            if on_epoch:
                on_epoch(epoch, train_loss, val_loss)

            if val_loss < best_val:
                best_val = val_loss
                best_state = copy.deepcopy(model.state_dict())
            decision = early_stop_check(history.val_loss, config.early_stop_patience)
            history.best_epoch = decision.best_epoch
            if decision.stop:
                log.info("early stop after epoch %d (best epoch %d)", epoch, decision.best_epoch)
                break

    model.load_state_dict(best_state)
    model.eval()
    history.wall_time_s = time.perf_counter() - t0
    if run_dir is not None:
        write_history(history, run_dir / "history.csv")
        save_checkpoint(model, norm, config, run_dir / "best.ckpt")
    return model, history


def write_history(history: TrainHistory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in history.rows():
            w.writerow([epoch, repr(tr), repr(va)])


def read_history(path) -> TrainHistory:
    h = TrainHistory()
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            h.train_loss.append(float(row["train_loss"]))
            h.val_loss.append(float(row["val_loss"]))
    h.stopped_epoch = len(h.val_loss)
    if h.val_loss:
        h.best_epoch = early_stop_check(h.val_loss, None).best_epoch
    return h


def checkpoint_id(model: nn.Module) -> str:
    """Content hash of the parameters and buffers (first 16 hex digits)."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()[:16]


def save_checkpoint(model: nn.Module, norm: NormalizationSpec, config: TrainConfig | None, path) -> Path:
    path = Path(path)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": model.kind,
        "model_config": config_dict(model.config),
        "state_dict": model.state_dict(),
        "norm": norm.to_dict(),
        "train_config": config.to_dict() if config is not None else None,
        "train_seed": config.seed if config is not None else None,
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path, expected_kind: str | None = None) -> nn.Module:
    """Rebuild a model from a checkpoint.

    The returned module has ``norm`` (NormalizationSpec) and ``checkpoint_info``
    (training config and seed) attached.
    """
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        version = payload.get("format_version") if isinstance(payload, dict) else None
        raise CheckpointError(f"{path}: unsupported checkpoint format_version {version!r}")
    kind = payload["model_kind"]
    if expected_kind is not None and canonical_kind(expected_kind) != kind:
        raise CheckpointError(f"{path} holds a {kind} model, expected {canonical_kind(expected_kind)}")
    config = make_config(kind, payload["model_config"])
    model = build_model(kind, config, fetch_weights=False)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter blob does not match the architecture: {exc}") from exc
    model.eval()
    model.norm = NormalizationSpec(**payload["norm"])
    model.checkpoint_info = {"train_config": payload["train_config"], "train_seed": payload["train_seed"]}
    return model
