"""Acceptance criteria 1-14, one test each.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one PASS/FAIL line per criterion. Criteria 7, 11 and 12 render and train
for real and take several minutes to over an hour on a CPU.
"""

import json
import shutil
import time

import numpy as np
import pytest
import torch

from oracles import oracle_project
from synthspeed.cli import main as cli_main
from synthspeed.dataset import (
    ClipSet,
    clip_indices,
    denormalize_speed,
    load_manifest,
    normalize_speed,
    split_dataset,
)
from synthspeed.dataset.manifest import DatasetManifest, EpisodeRecord
from synthspeed.evaluation import GROUPINGS, evaluate, group_report, overall_mae, read_group_csv, write_group_csv
from synthspeed.models import CnnGruConfig, R3DConfig, build_cnn_gru, build_r3d18, predict_speed, summarize
from synthspeed.scenesynth import (
    CameraRig,
    EpisodeSpec,
    draw_episode_spec,
    generate_dataset,
    generate_episode,
    get_vehicle,
    project_point,
    project_points,
    sample_speed,
)
from synthspeed.training import TrainConfig, early_stop_check, train


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@criterion(1, "speed sampler statistics")
def test_criterion_01_speed_sampler(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    v = np.array([sample_speed(rng).speed_mps for _ in range(10_000)])
    elapsed = time.perf_counter() - t0
    record_property("mean", round(v.mean(), 4))
    record_property("std", round(v.std(ddof=1), 4))
    assert v.min() >= 8.33 and v.max() <= 27.77
    assert abs(v.mean() - 18.05) <= 0.20
    assert abs(v.std(ddof=1) - 5.61) <= 0.20
    assert elapsed < 1.0


@criterion(2, "normalization bijection")
def test_criterion_02_normalization():
    rng = np.random.default_rng(7)
    for v in rng.uniform(8.33, 27.77, 100):
        assert abs(denormalize_speed(normalize_speed(v)) - v) < 1e-9
    assert normalize_speed(30 / 3.6) == -1.0
    assert normalize_speed(100 / 3.6) == 1.0


@criterion(3, "split exactness at n=610")
def test_criterion_03_splits():
    recs = [EpisodeRecord(i, 15.0, None, "audi.tt", "car", "Noon_0_0", 80.0, (96, 54), 20.0, None, 100)
            for i in range(610)]
    m = DatasetManifest(root=".", episodes=recs, fps=80.0, resolution=(96, 54), segment_length_m=20.0)
    sp = split_dataset(m, seed=0)
    assert sp.sizes == (366, 122, 122)
    tr, va, te = map(set, (sp.train, sp.val, sp.test))
    assert not (tr & va or tr & te or va & te)
    assert tr | va | te == set(m.ids)


@criterion(4, "clip sampling")
def test_criterion_04_clip_sampling():
    assert clip_indices(16, 16, 16) == list(range(16))
    assert clip_indices(200, 4, 100) == [0, 33, 66, 99]
    enumerated = []
    for k in range(16):
        num, den = k * 191, 15
        idx = num // den + (1 if 2 * (num % den) >= den else 0)
        enumerated.append(min(idx, 119))
    assert clip_indices(120, 16, 192) == enumerated
    assert enumerated.count(119) >= 2
    slowest = EpisodeSpec(0, 0.0, get_vehicle("audi.tt"))
    n = slowest.n_frames(CameraRig())
    assert n == 193
    unclamped = clip_indices(10**6, 16, 192)
    assert clip_indices(n, 16, 192) == unclamped


@criterion(5, "projection oracle equivalence")
def test_criterion_05_projection(record_property):
    t0 = time.perf_counter()
    rig = CameraRig()
    rng = np.random.default_rng(5)
    cand = rng.uniform([0.0, -20.0, -1.0], [80.0, 20.0, 5.0], size=(200_000, 3))
    uv, z = oracle_project(cand, rig)
    ok = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] <= rig.width_px) & (uv[:, 1] >= 0) & (uv[:, 1] <= rig.height_px)
    pts = cand[ok][:1000]
    assert len(pts) == 1000
    err = np.abs(project_points(pts, rig) - oracle_project(pts, rig)[0]).max()
    record_property("max_err_px", f"{err:.2e}")
    assert err < 1e-6
    u, v = project_point((3.0, 0.0, 0.0), rig)
    assert abs(u - 960) < 1e-9 and abs(v - 540) < 1e-9
    assert time.perf_counter() - t0 < 5.0


@criterion(6, "kinematic exactness and monotone motion")
def test_criterion_06_kinematics():
    rig = CameraRig(width_px=96, height_px=54)
    for i in range(610):
        spec = draw_episode_spec(0, i)
        n = spec.n_frames(rig)
        pos = spec.ground_truth(n, rig.fps)
        step = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        np.testing.assert_allclose(step, spec.speed_mps / rig.fps, rtol=1e-12, atol=1e-12)
        centroid = pos + np.array([0.0, 0.0, spec.vehicle.height_m / 2])
        v = project_points(centroid, rig)[:, 1]
        v = v[~np.isnan(v)]
        assert len(v) >= 2 and np.all(np.diff(v) > 0), spec.episode_index
    # the rendered episode carries the same closed-form ground truth
    ep = generate_episode(draw_episode_spec(0, 3), CameraRig(width_px=48, height_px=32))
    step = np.linalg.norm(np.diff(ep.ground_truth, axis=0), axis=1)
    np.testing.assert_allclose(step, ep.spec.speed_mps / 80.0, rtol=1e-12, atol=1e-12)


@pytest.mark.slow
@criterion(7, "dataset scale (610 episodes at 96x54)")
def test_criterion_07_dataset_scale(tmp_path, record_property):
    t0 = time.perf_counter()
    m = generate_dataset(610, CameraRig(width_px=96, height_px=54), master_seed=0, output_dir=tmp_path / "ds")
    elapsed = time.perf_counter() - t0
    total = m.total_frames()
    on_disk = sum(1 for _ in (tmp_path / "ds" / "episodes").glob("*/frames/*.png"))
    shutil.rmtree(tmp_path / "ds")
    record_property("frames", total)
    record_property("minutes", round(elapsed / 60, 2))
    assert len(m) == 610 and on_disk == total
    assert all(8.33 <= e.speed_mps <= 27.77 for e in m.episodes)
    assert 55_000 <= total <= 66_000
    assert elapsed < 15 * 60


@criterion(8, "parameter counts")
def test_criterion_08_parameter_counts(record_property):
    t0 = time.perf_counter()
    r3d = summarize(build_r3d18(R3DConfig()))
    gru = summarize(build_cnn_gru(CnnGruConfig(), fetch_weights=False))
    record_property("r3d18", r3d.trainable_params)
    record_property("backbone", gru.frozen_params)
    record_property("gru_head", gru.trainable_params)
    assert r3d.trainable_params == 33_166_785 and r3d.frozen_params == 0
    assert gru.frozen_params == 14_714_688
    assert 3_770_901 <= gru.trainable_params <= 3_771_051
    assert time.perf_counter() - t0 < 60


@criterion(9, "shapes, gradients, frozen backbone")
def test_criterion_09_shapes_and_gradients():
    torch.manual_seed(0)
    r3d = build_r3d18(R3DConfig())
    x = torch.rand(2, 3, 16, 112, 112)
    out = r3d(x)
    assert out.shape == (2, 1)
    out.pow(2).mean().backward()
    for name, p in r3d.named_parameters():
        assert p.grad is not None and torch.isfinite(p.grad).all() and p.grad.abs().sum() > 0, name

    gru = build_cnn_gru(CnnGruConfig(), fetch_weights=False)
    frames = np.random.default_rng(0).integers(0, 256, (1, 32, 224, 224, 3), dtype=np.uint8)
    before = {n: p.detach().clone() for n, p in gru.backbone.named_parameters()}
    opt = torch.optim.Adam([p for p in gru.parameters() if p.requires_grad], lr=1e-3)
    out = gru(gru.prepare(frames))
    assert out.shape == (1, 1)
    (out - 0.5).pow(2).mean().backward()
    for name, p in gru.named_parameters():
        if p.requires_grad:
            assert p.grad is not None and torch.isfinite(p.grad).all() and p.grad.abs().sum() > 0, name
    opt.step()
    assert all(torch.equal(p, before[n]) for n, p in gru.backbone.named_parameters())


def _stop_epoch(losses, patience):
    for e in range(1, len(losses) + 1):
        d = early_stop_check(losses[:e], patience)
        if d.stop:
            return e, d.best_epoch
    return None, early_stop_check(losses, patience).best_epoch


@criterion(10, "early-stopping rule")
def test_criterion_10_early_stopping():
    assert _stop_epoch([.5, .4, .4, .41, .42, .43, .44, .45, .46, .47], 7) == (9, 2)
    assert _stop_epoch([.3, .2, .25, .25, .25], 3) == (5, 2)
    assert _stop_epoch([.4] * 6, 3) == (4, 1)
    assert _stop_epoch([.9, .8, .7, .6, .5, .4, .3, .2, .1], 3) == (None, 9)


def _train_mae(model, clips):
    return float(np.mean([abs(predict_speed(model, c) - c.speed_mps) for c in clips]))


@pytest.mark.slow
@criterion(11, "overfit sanity on 10 episodes")
def test_criterion_11_overfit(tmp_path, record_property):
    t0 = time.perf_counter()
    root = tmp_path / "ten"
    generate_dataset(10, CameraRig(width_px=64, height_px=64), master_seed=3, output_dir=root)
    m = load_manifest(root)
    clips = ClipSet(m.stored(), 16)
    model = build_r3d18(R3DConfig(input_hw=(64, 64), width_multiplier=0.25), seed=0)
    maes = []

    def on_epoch(epoch, *_):
        maes.append(_train_mae(model, clips))

    cfg = TrainConfig.for_model("r3d18", max_epochs=50, early_stop_patience=None, seed=0)
    train(model, clips, clips, cfg, on_epoch=on_epoch)
    elapsed = time.perf_counter() - t0
    best = min(maes)
    record_property("best_train_mae_mps", round(best, 3))
    record_property("epoch", maes.index(best) + 1)
    record_property("minutes", round(elapsed / 60, 2))
    assert best < 0.5
    assert elapsed < 10 * 60


@pytest.mark.slow
@criterion(12, "desk-scale learning (120 episodes, 96x96, test MAE <= 1.5 m/s)")
def test_criterion_12_desk_learning(tmp_path, record_property):
    t0 = time.perf_counter()
    root = tmp_path / "desk"
    generate_dataset(120, CameraRig(width_px=96, height_px=96), master_seed=7, output_dir=root)
    m = load_manifest(root)
    sp = split_dataset(m, seed=0)
    assert sp.sizes == (72, 24, 24)
    tr, va, te = (ClipSet(m.stored(ids), 16) for ids in (sp.train, sp.val, sp.test))
    model = build_r3d18(R3DConfig(n_steps=16, input_hw=(96, 96), width_multiplier=0.25), seed=0)
    model, hist = train(model, tr, va, TrainConfig.for_model("r3d18", seed=0))
    mae, _ = evaluate(model, te)
    elapsed = time.perf_counter() - t0
    record_property("test_mae_mps", round(mae, 3))
    record_property("epochs", hist.stopped_epoch)
    record_property("best_epoch", hist.best_epoch)
    record_property("minutes", round(elapsed / 60, 1))
    assert mae <= 1.5
    assert elapsed <= 2 * 3600


@criterion(13, "report consistency")
def test_criterion_13_report_consistency(tiny_dataset, tmp_path):
    m = load_manifest(tiny_dataset)
    clips = ClipSet(m.stored(), 4)
    model = build_r3d18(R3DConfig(n_steps=4, input_hw=(32, 48), width_multiplier=0.125), seed=1)
    mae, errors = evaluate(model, clips)
    assert mae == pytest.approx(overall_mae(errors), abs=0)
    for by in GROUPINGS:
        rep = group_report(errors, m, by)
        assert abs(rep.weighted_mae() - mae) < 1e-9, by
        assert rep.n_episodes == len(errors), by
        assert read_group_csv(write_group_csv(rep, tmp_path / f"{by}.csv"), by) == rep, by


def _pipeline(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    cfg = {
        "dataset": {"n_episodes": 6, "master_seed": 13, "rig": {"width_px": 48, "height_px": 32}},
        "model": {"kind": "r3d18", "config": {"n_steps": 4, "input_hw": [32, 48], "width_multiplier": 0.125}},
        "training": {"max_epochs": 3, "seed": 4},
    }
    (workdir / "run.json").write_text(json.dumps(cfg))
    for argv in (["generate"], ["split"], ["train"]):
        assert cli_main([*argv, "--config", "run.json"]) == 0
    (ckpt,) = workdir.glob("runs/train_*/best.ckpt")
    assert cli_main(["evaluate", "--config", "run.json", "--checkpoint", str(ckpt)]) == 0
    return {
        "manifest": (workdir / "data" / "manifest.json").read_bytes(),
        "history": (ckpt.parent / "history.csv").read_bytes(),
        "summary": (ckpt.parent / "eval" / "summary.json").read_bytes(),
    }


@criterion(14, "end-to-end determinism")
def test_criterion_14_determinism(tmp_path, monkeypatch):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _pipeline(tmp_path / "a", monkeypatch)
    b = _pipeline(tmp_path / "b", monkeypatch)
    assert a == b
