import json
import math

import pytest

import earlyrec


def quarter_weight(t, T):
    q = t / T
    return 1.0 if q < 0.25 else 0.5 if q < 0.5 else 0.25 if q < 0.75 else 0.125


def test_early_weight_decays_by_quarter():
    for T in (8, 100, 101):
        for t in range(1, T + 1):
            assert earlyrec.early_weight(t, T) == quarter_weight(t, T)
    with pytest.raises(ValueError):
        earlyrec.early_weight(0, 8)


def test_weighted_max_pool_matches_brute_force():
    frames = [(1, [5.0, -1.0]), (3, [1.0, 2.0]), (4, [0.5, 1.9])]
    pooled, argmax = earlyrec.weighted_max_pool(frames, 4)
    scored = [[quarter_weight(t, 4) * x for x in f] for t, f in frames]
    assert pooled == [max(col) for col in zip(*scored)]
    assert len(argmax) == 2

    plain, _ = earlyrec.weighted_max_pool(frames, 4, weights_on=False)
    assert plain == [5.0, 2.0]


def test_losses():
    probs = [[0.5, 0.5], [0.2, 0.8], [0.9, 0.1]]
    avg = earlyrec.average_ce(probs, 1, 3)
    expected = -(math.log(0.5) + math.log(0.8) + math.log(0.1)) / 3
    assert avg["value"] == pytest.approx(expected, rel=1e-12)

    assert earlyrec.false_positive_coefficient(4, 4) == 1.0
    assert earlyrec.false_positive_coefficient(1, 4) == 0.25
    assert [earlyrec.smooth_l1(x) for x in (0.5, 1.0, 2.0)] == [0.125, 0.5, 1.5]

    lw = earlyrec.linear_weighted_ce(probs, 1, 3, 3)
    total = earlyrec.fsp_total(probs, 1, "linear_weighted", "smooth_l1", 0.0,
                               [[0.1]] * 3, [[0.3]] * 3, 3)
    assert total["total"] == lw["value"]


def test_truncation_point():
    assert earlyrec.truncation_point(100, "fraction:0.2") == (80, 20, False)
    assert earlyrec.truncation_point(10, "steps:3") == (7, 3, False)
    assert earlyrec.truncation_point(3, "steps:3")[2] is True


def test_dataset_round_trip(tmp_path):
    path = tmp_path / "d.jsonl"
    n = earlyrec.generate_dataset(str(path), seed=7, per_class=3)
    records = earlyrec.load_dataset(str(path))
    assert len(records) == n == 27
    assert {r["split"] for r in records} == {"train", "val", "test"}
    assert all(0 <= r["label"] < 9 for r in records)


def test_evaluate_traces_recount():
    traces = [[[0.9, 0.1], [0.4, 0.6]], [[0.3, 0.7], [0.2, 0.8]]]
    report = json.loads(earlyrec.evaluate_traces(traces, [0, 1], 2, [1, 2]))
    assert report["accuracy"] == [1.0, 0.5]


def test_run_stage_generate(tmp_path):
    cfg = {
        "seed": 5,
        "out": str(tmp_path),
        "dataset": {
            "generator": {"num_classes": 2, "feature_dim": 3, "durations": [[20, 2], [22, 2]]},
            "per_class_counts": [3, 3],
        },
    }
    assert earlyrec.run_stage("generate", cfg) == 0
    assert (tmp_path / "dataset.jsonl").exists()
    manifest = json.loads((tmp_path / "manifest_generate.json").read_text())
    assert manifest["seed"] == 5

    with pytest.raises(earlyrec.ConfigError):
        earlyrec.run_stage("generate", cfg, ["dataset.generator.bogus=1"])
