import numpy as np
import pytest
from dataclasses import replace

from detmon.mapeval import label_series, window_map
from detmon.stream import read_all, validate
from detmon.synthgen import SynthConfig, difficulty_walk, generate_stream, make_split

SMALL = SynthConfig(seed=5, frame_count=40, layer_shapes=((2, 8, 8), (4, 4, 4)))


def test_identical_configs_identical_bytes():
    a, diff_a = generate_stream(SMALL)
    b, diff_b = generate_stream(SMALL)
    assert a == b
    np.testing.assert_array_equal(diff_a, diff_b)


def test_generated_stream_validates():
    data, _ = generate_stream(SMALL)
    report = validate(data)
    assert report.ok, report.problems
    assert report.frames_read == 40


def test_difficulty_stays_in_unit_interval():
    config = replace(SMALL, frame_count=500, walk_step=0.3)
    rng = np.random.default_rng(0)
    d = difficulty_walk(config, rng)
    assert d.min() >= 0.0 and d.max() <= 1.0


def test_zero_gains_give_perfect_detector():
    config = replace(
        SMALL, miss_gain=0.0, localization_gain=0.0, spurious_gain=0.0,
        feature_noise_gain=0.0,
    )
    data, _ = generate_stream(config)
    _, frames = read_all(data)
    for frame in frames:
        assert len(frame.detections) == len(frame.ground_truth)
        for det, gt in zip(frame.detections, frame.ground_truth):
            assert det.box == gt.box and det.class_id == gt.class_id
    labels = label_series(frames, 5)
    assert all(l.map_value == 1.0 and l.ordinal_class == 4 for l in labels)


def test_saturated_miss_gain_kills_recall():
    config = replace(
        SMALL, miss_gain=1000.0, localization_gain=0.0, spurious_gain=0.0,
    )
    data, _ = generate_stream(config)
    _, frames = read_all(data)
    labels = label_series(frames, 5)
    values = [l.map_value for l in labels if l.defined]
    assert np.mean(values) < 0.15


def test_monotone_degradation_under_paired_randomness():
    # Same seed = same draws; only the miss gain moves. Localization noise is
    # off so every surviving derived detection stays a true positive, the
    # regime where extra misses can only remove true positives.
    maps = []
    for gain in (0.2, 0.5, 0.9):
        config = replace(SMALL, miss_gain=gain, localization_gain=0.0)
        data, _ = generate_stream(config)
        _, frames = read_all(data)
        maps.append([window_map(frames[i:i + 5]) for i in range(0, 36, 5)])
    for weaker, stronger in zip(maps, maps[1:]):
        for a, b in zip(weaker, stronger):
            assert b <= a + 1e-12


def test_make_split_produces_distinct_valid_streams():
    train, test = make_split(SMALL, train_seed=1, test_seed=2)
    assert train != test
    assert validate(train).ok and validate(test).ok


def test_make_split_rejects_equal_seeds():
    with pytest.raises(ValueError, match="differ"):
        make_split(SMALL, train_seed=3, test_seed=3)


def test_difficulty_correlates_negatively_with_map_seed42():
    data, diff = generate_stream(SynthConfig(seed=42))
    _, frames = read_all(data)
    labels = label_series(frames, 10)
    values = np.array([l.map_value for l in labels])
    window_difficulty = np.array([diff[i:i + 10].mean() for i in range(len(labels))])
    r = float(np.corrcoef(window_difficulty, values)[0, 1])
    assert r < -0.5
    # Golden value frozen from the first generation of this fixture.
    assert r == pytest.approx(-0.958159635673827, abs=1e-6)
