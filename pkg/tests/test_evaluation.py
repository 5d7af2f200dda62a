import json
from collections import defaultdict

import numpy as np
import pytest

from oracles import mean_abs_deviation_from_midpoint
from synthspeed.dataset import ClipSet, load_manifest
from synthspeed.evaluation import (
    GROUPINGS,
    REPORT_FILES,
    EpisodeError,
    emit_report,
    evaluate,
    group_report,
    overall_mae,
    read_group_csv,
    speed_bin_edges,
    speed_bin_key,
    write_group_csv,
)
from synthspeed.models import R3DConfig, build_r3d18
from synthspeed.training import TrainHistory


@pytest.fixture(scope="module")
def manifest(tiny_dataset):
    return load_manifest(tiny_dataset)


@pytest.fixture(scope="module")
def errors(manifest):
    rng = np.random.default_rng(3)
    return [EpisodeError(e.episode_id, e.speed_mps, e.speed_mps + rng.normal(0, 2)) for e in manifest.episodes]


def test_oracle_and_constant_predictors(manifest):
    clips = ClipSet(manifest.stored(), 4)
    mae, errs = evaluate(lambda c: c.speed_mps, clips)
    assert mae == 0.0 and len(errs) == len(manifest)
    mid = 65 / 3.6
    mae, _ = evaluate(lambda c: mid, clips)
    direct = mean_abs_deviation_from_midpoint([e.speed_mps for e in manifest.episodes], mid)
    assert mae == pytest.approx(direct, abs=1e-12)


def test_constant_predictor_approaches_quarter_range():
    rng = np.random.default_rng(0)
    speeds = rng.uniform(8.33, 27.77, 200_000)
    assert mean_abs_deviation_from_midpoint(speeds, 65 / 3.6) == pytest.approx((100 - 30) / 3.6 / 4, abs=0.02)


def test_evaluate_is_order_invariant(manifest):
    ids = manifest.ids
    fwd = ClipSet(manifest.stored(ids), 4)
    rev = ClipSet(manifest.stored(ids[::-1]), 4)
    model = build_r3d18(R3DConfig(n_steps=4, input_hw=(32, 48), width_multiplier=0.125))
    assert evaluate(model, fwd) == evaluate(model, rev)


def test_evaluate_errors(manifest):
    with pytest.raises(ValueError):
        evaluate(lambda c: 0.0, [])
    model = build_r3d18(R3DConfig(n_steps=8, input_hw=(32, 48), width_multiplier=0.125))
    with pytest.raises(ValueError, match="timesteps"):
        evaluate(model, ClipSet(manifest.stored(), 4))


@pytest.mark.parametrize("by", GROUPINGS)
def test_group_consistency(errors, manifest, by):
    rep = group_report(errors, manifest, by)
    assert rep.n_episodes == len(errors)
    assert abs(rep.weighted_mae() - overall_mae(errors)) < 1e-9


@pytest.mark.parametrize("by", GROUPINGS)
def test_group_counts_and_mean_speeds_match_brute_force(errors, manifest, by):
    rep = group_report(errors, manifest, by)
    edges = speed_bin_edges()
    key = {
        "vehicle": lambda r: r.vehicle_name,
        "category": lambda r: r.vehicle_category,
        "environment": lambda r: r.environment_label,
        "sun": lambda r: r.environment_label.split("_")[0],
        "speed_bin": lambda r: speed_bin_key(r.speed_mps, edges),
    }[by]
    groups = defaultdict(list)
    for e in errors:
        groups[key(manifest.record(e.episode_id))].append(e)
    assert {r.group_key for r in rep.rows} == set(groups)
    for row in rep.rows:
        members = groups[row.group_key]
        assert row.n_episodes == len(members)
        assert row.mean_speed_mps == pytest.approx(sum(m.true_speed_mps for m in members) / len(members), abs=1e-12)
    assert not set(rep.omitted) & set(groups)


def test_two_equal_groups_average(manifest):
    a, b = manifest.episodes[0], manifest.episodes[1]
    errs = [EpisodeError(a.episode_id, a.speed_mps, a.speed_mps + 0.2),
            EpisodeError(b.episode_id, b.speed_mps, b.speed_mps - 0.4)]
    rep = group_report(errs, manifest, "vehicle" if a.vehicle_name != b.vehicle_name else "environment")
    assert rep.weighted_mae() == pytest.approx(0.3)


def test_single_group_equals_overall(errors, manifest):
    rep = group_report(errors, manifest, "sun")
    sub = [e for e in errors if manifest.record(e.episode_id).environment_label.startswith("Noon")]
    one = group_report(sub, manifest, "sun")
    assert len(one.rows) == 1 and one.rows[0].mae_mps == pytest.approx(overall_mae(sub))
    assert one.omitted == ("Sunset",)
    assert rep.row("Noon").n_episodes == len(sub)


def test_speed_bins_cover_range_exactly_once():
    edges = speed_bin_edges()
    assert len(edges) == 11 and edges[0] == 8.33 and edges[-1] == pytest.approx(27.77)
    keys = {speed_bin_key(v, edges) for v in np.linspace(8.33, 27.77, 1001)}
    assert len(keys) == 10
    assert speed_bin_key(8.33, edges) == "08.33-10.27"
    assert speed_bin_key(27.77, edges).endswith("27.77")


def test_unknown_grouping(errors, manifest):
    with pytest.raises(ValueError):
        group_report(errors, manifest, "colour")


@pytest.mark.parametrize("by", GROUPINGS)
def test_csv_round_trip(tmp_path, errors, manifest, by):
    rep = group_report(errors, manifest, by)
    path = write_group_csv(rep, tmp_path / "r.csv")
    assert read_group_csv(path, by) == rep
    assert path.read_text().splitlines()[0] == "group_key,mae_mps,n_episodes,mean_speed_mps"


def test_emit_report_writes_everything(tmp_path, errors, manifest):
    reports = {by: group_report(errors, manifest, by) for by in GROUPINGS}
    hist = TrainHistory([0.5, 0.3, 0.2], [0.6, 0.4, 0.45], 3, 2)
    written = emit_report(reports, errors, tmp_path, model_kind="r3d18", checkpoint_id="abc", history=hist)
    for name in list(REPORT_FILES.values()) + ["summary.json", "episodes.csv", "loss_curve.png", "error_vs_speed.png"]:
        assert (tmp_path / name).is_file(), name
        assert name in written
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["model_kind"] == "r3d18" and summary["n_test"] == len(errors)
    assert summary["overall_mae_mps"] == pytest.approx(overall_mae(errors))
    assert summary["checkpoint_id"] == "abc"
    # 20 episodes cannot cover all 27 vehicles; the empty ones are listed, not tabulated
    assert set(summary["omitted_groups"]["vehicle"]) == set(reports["vehicle"].omitted)
    assert len(summary["omitted_groups"]["vehicle"]) > 0
