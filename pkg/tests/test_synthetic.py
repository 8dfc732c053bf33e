import json

import numpy as np
import pytest

from conformal_box.dataset_io import dataset_to_json
from conformal_box.geometry import Box, contains
from conformal_box.pairing import match_dataset
from conformal_box.synthetic import GeneratorConfig, NoiseModel, generate, monte_carlo_coverage


def small(n_images=120, **noise):
    return GeneratorConfig(n_images=n_images, noise=NoiseModel(**noise))


def test_deterministic_bytes():
    cfg = small(30, seed=4)
    a = json.dumps(dataset_to_json(generate(cfg)))
    b = json.dumps(dataset_to_json(generate(cfg)))
    assert a == b
    assert a != json.dumps(dataset_to_json(generate(cfg.with_seed(5))))


def test_noiseless_detector():
    ds = generate(small(30, edge_noise_scale=0.0, miss_rate=0.0, false_positive_rate=0.0))
    for gt, pred in ds:
        assert tuple(b for b, _ in pred.boxes) == gt.boxes


def test_truths_inside_frame():
    cfg = small(50)
    for gt, _ in generate(cfg):
        assert all(contains(cfg.frame, t) for t in gt.boxes)
        assert (gt.image_width, gt.image_height) == (1280, 720)


def test_confidences_in_unit_interval():
    for _, pred in generate(small(50)):
        assert all(0.0 <= c <= 1.0 for _, c in pred.boxes)


def test_fixed_box_count():
    cfg = GeneratorConfig(n_images=10, boxes_per_image=4, boxes_per_image_dist="fixed")
    assert all(len(gt.boxes) == 4 for gt, _ in generate(cfg))


def test_rates_validated():
    with pytest.raises(ValueError):
        NoiseModel(miss_rate=1.0)
    with pytest.raises(ValueError):
        NoiseModel(false_positive_rate=-1)


def test_infeasible_size_range():
    with pytest.raises(ValueError, match="does not fit"):
        generate(GeneratorConfig(frame=Box(0, 0, 100, 100), size_range=(20, 150)))
    with pytest.raises(ValueError):
        generate(GeneratorConfig(frame=Box(0, 0, 0, 100)))


def test_miss_rate_produces_false_negatives():
    ds = generate(small(200, miss_rate=0.5, false_positive_rate=0.0))
    r = match_dataset(ds)
    frac = len(r.false_negatives) / ds.n_truths
    assert 0.4 < frac < 0.6


def test_config_json_round_trip():
    cfg = small(17, edge_noise_pixels=2.0, seed=3)
    assert GeneratorConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


def test_monte_carlo_report_fields():
    mc = monte_carlo_coverage(small(), 0.2, "additive", repetitions=5)
    assert len(mc.per_rep_coverage) == 5
    assert mc.mean_coverage == pytest.approx(np.mean(mc.per_rep_coverage))
    assert mc.n_excluded == 0
    doc = json.loads(json.dumps(mc.to_json()))
    assert doc["mode"] == "additive" and len(doc["per_rep_margins"]) == 5


def test_monte_carlo_parallel_matches_serial():
    a = monte_carlo_coverage(small(60), 0.3, "multiplicative", repetitions=4)
    b = monte_carlo_coverage(small(60), 0.3, "multiplicative", repetitions=4, n_jobs=2)
    assert a == b


def test_monte_carlo_resplit():
    mc = monte_carlo_coverage(small(), 0.2, "additive", repetitions=5, resample="resplit")
    assert len(set(mc.per_rep_coverage)) > 1


def test_unbounded_repetitions_are_excluded():
    mc = monte_carlo_coverage(small(8), 0.05, "additive", repetitions=3)
    assert mc.n_excluded == 3 and mc.per_rep_coverage == ()


def test_single_repetition_varies():
    mc = monte_carlo_coverage(small(), 0.1, "additive", repetitions=20)
    assert mc.std_coverage > 0
    assert min(mc.per_rep_coverage) < 0.9


def test_alpha_half():
    cfg = GeneratorConfig()
    lo = monte_carlo_coverage(cfg, 0.1, "additive", repetitions=30)
    hi = monte_carlo_coverage(cfg, 0.5, "additive", repetitions=30)
    assert hi.mean_coverage >= 0.5
    assert all(a < b for a, b in zip(hi.mean_margins, lo.mean_margins))
    assert np.mean(hi.mean_margins) < 0.75 * np.mean(lo.mean_margins)


def test_stretch_ordering_follows_noise_type():
    relative = GeneratorConfig(noise=NoiseModel(edge_noise_scale=0.1))
    absolute = GeneratorConfig(noise=NoiseModel(edge_noise_scale=0.0, edge_noise_pixels=5.0))
    stretch = {}
    for name, cfg in (("relative", relative), ("absolute", absolute)):
        for mode in ("additive", "multiplicative"):
            stretch[name, mode] = monte_carlo_coverage(cfg, 0.1, mode, repetitions=10).mean_stretch
    assert stretch["relative", "multiplicative"] < stretch["relative", "additive"]
    assert stretch["absolute", "additive"] < stretch["absolute", "multiplicative"]
