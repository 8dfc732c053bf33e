import csv
import math

import numpy as np
import pytest

from conformal_box.conformal import MarginSet, UnboundedMarginsError, calibrate
from conformal_box.dataset_io import DetectionDataset, GroundTruthRecord, PredictionRecord
from conformal_box.geometry import Box
from conformal_box.metrics import (
    average_precision,
    coverage,
    coverage_by_scores,
    precision_recall_curve,
    stretch,
)
from conformal_box.pairing import MatchedPair, match_dataset
from conformal_box.synthetic import GeneratorConfig, NoiseModel, generate

from conftest import jitter, random_box


def dataset(*images):
    recs = []
    for i, (truths, preds) in enumerate(images):
        recs.append((GroundTruthRecord(i, tuple(truths), 100, 100),
                     PredictionRecord(i, tuple(preds))))
    return DetectionDataset(tuple(recs))


def random_dataset(rng, n_images=3):
    images = []
    for _ in range(n_images):
        truths = [random_box(rng) for _ in range(rng.integers(1, 5))]
        preds = [(jitter(rng, t, 4.0), float(rng.random())) for t in truths if rng.random() < 0.8]
        preds += [(random_box(rng), float(rng.random())) for _ in range(rng.integers(0, 3))]
        images.append((truths, preds))
    return dataset(*images)


def zeros(mode="additive"):
    return MarginSet.zeros(mode)


def test_stretch_hand_example():
    pair = MatchedPair(Box(0, 0, 10, 10), Box(0, 0, 10, 10), 1.0, 1.0)
    m = MarginSet(1, 1, 1, 1, 0.1, "additive", 50)
    assert stretch([pair], m) == (pytest.approx(1.44), 0)


def test_stretch_excludes_zero_area():
    pairs = [MatchedPair(Box(0, 0, 1, 1), Box(0, 0, 0, 1), 1.0, 0.0),
             MatchedPair(Box(0, 0, 1, 1), Box(0, 0, 1, 1), 1.0, 1.0)]
    s, excluded = stretch(pairs, zeros())
    assert (s, excluded) == (1.0, 1)


def test_zero_margins_equal_raw():
    ds = generate(GeneratorConfig(n_images=40))
    pairs = match_dataset(ds).pairs
    raw = coverage(pairs)
    for mode in ("additive", "multiplicative"):
        z = coverage(pairs, zeros(mode))
        assert z.empirical_coverage == raw.empirical_coverage
        assert z.n_covered == raw.n_covered
        assert z.stretch == 1.0
    assert raw.stretch == 1.0 and raw.mode is None


def test_noiseless_raw_coverage_is_one():
    noise = NoiseModel(edge_noise_scale=0.0, miss_rate=0.0, false_positive_rate=0.0)
    ds = generate(GeneratorConfig(n_images=20, noise=noise))
    pairs = match_dataset(ds, iou_threshold=0.95).pairs
    assert coverage(pairs).empirical_coverage == 1.0
    assert calibrate(pairs, 0.1, "additive").q == (0, 0, 0, 0)


def test_coverage_report_counts():
    ds = generate(GeneratorConfig(n_images=100))
    pairs = match_dataset(ds).pairs
    m = calibrate(pairs, 0.1, "additive")
    r = coverage(pairs, m)
    assert r.empirical_coverage == r.n_covered / r.n_pairs
    assert r.n_pairs == len(pairs)
    assert r.to_json()["mode"] == "additive"


def test_coverage_via_scores_agrees():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ds = generate(GeneratorConfig(n_images=60, noise=NoiseModel(seed=int(rng.integers(1e6)))))
        pairs = match_dataset(ds).pairs
        for mode in ("additive", "multiplicative"):
            m = calibrate(pairs[: len(pairs) // 2], 0.2, mode)
            test = pairs[len(pairs) // 2:]
            assert coverage(test, m).n_covered == int(coverage_by_scores(test, m).sum())


def test_clamping_never_evicts_contained_truths():
    ds = generate(GeneratorConfig(n_images=100))
    pairs = match_dataset(ds).pairs
    m = calibrate(pairs, 0.1, "additive")
    assert coverage(pairs, m, ds.frames()).n_covered == coverage(pairs, m).n_covered


def test_unbounded_margins_rejected():
    m = MarginSet(math.inf, 0, 0, 0, 0.1, "additive", 3, unbounded=True)
    with pytest.raises(UnboundedMarginsError):
        coverage([MatchedPair(Box(0, 0, 1, 1), Box(0, 0, 1, 1), 1, 1)], m)


def test_empty_pairs_give_nan():
    assert math.isnan(coverage([]).empirical_coverage)
    assert coverage([]).to_json()["empirical_coverage"] is None


def test_ap_perfect_detector():
    truths = [Box(0, 0, 10, 10), Box(20, 20, 40, 40)]
    ds = dataset((truths, [(t, 1.0) for t in truths]), ([Box(5, 5, 9, 9)], [(Box(5, 5, 9, 9), 1.0)]))
    assert average_precision(ds, 0.5) == 1.0


def test_ap_no_predictions():
    assert average_precision(dataset(([Box(0, 0, 1, 1)], [])), 0.5) == 0.0


def test_ap_hand_traced():
    truths = [Box(0, 0, 10, 10), Box(50, 50, 60, 60)]
    preds = [(Box(0, 0, 10, 10), 0.9), (Box(80, 80, 90, 90), 0.8)]
    curve = precision_recall_curve(dataset((truths, preds)), 0.5)
    assert curve.precision == (1.0, 0.5)
    assert curve.recall == (0.5, 0.5)
    assert curve.area() == pytest.approx(0.5, abs=1e-12)


def test_ap_envelope_hand_traced():
    # FP, TP, TP over 2 truths: P = 0, 1/2, 2/3 ; R = 0, 1/2, 1
    truths = [Box(0, 0, 10, 10), Box(50, 50, 60, 60)]
    preds = [(Box(80, 80, 90, 90), 0.9), (Box(0, 0, 10, 10), 0.8), (Box(50, 50, 60, 60), 0.7)]
    assert average_precision(dataset((truths, preds)), 0.5) == pytest.approx(2 / 3)


def test_ap_uses_best_unmatched_truth():
    truths = [Box(0, 0, 10, 10), Box(2, 0, 12, 10)]
    preds = [(Box(2, 0, 12, 10), 0.9), (Box(0, 0, 10, 10), 0.8)]
    assert average_precision(dataset((truths, preds)), 0.5) == 1.0


def test_ap_without_truths_is_an_error():
    with pytest.raises(ValueError):
        average_precision(dataset(([], [(Box(0, 0, 1, 1), 0.5)])), 0.5)


def test_ap_invariant_to_monotone_confidence_transform():
    rng = np.random.default_rng(21)
    for _ in range(200):
        ds = random_dataset(rng)
        warped = DetectionDataset(tuple(
            (gt, PredictionRecord(p.image_id, tuple((b, c ** 3) for b, c in p.boxes)))
            for gt, p in ds))
        assert average_precision(warped, 0.5) == average_precision(ds, 0.5)


def test_ap_monotone_in_iou_threshold():
    rng = np.random.default_rng(22)
    for _ in range(300):
        ds = random_dataset(rng)
        lo, hi = sorted(rng.uniform(0.05, 0.95, 2))
        assert average_precision(ds, lo) >= average_precision(ds, hi)


def test_pr_curve_invariants(tmp_path):
    rng = np.random.default_rng(23)
    ds = random_dataset(rng, 10)
    curve = precision_recall_curve(ds, 0.5)
    assert len(curve) == ds.n_predictions
    assert all(np.diff(curve.recall) >= 0)
    assert all(0 <= p <= 1 for p in curve.precision)
    assert all(np.diff(curve.thresholds) <= 0)
    curve.to_csv(tmp_path / "pr.csv")
    rows = list(csv.DictReader(open(tmp_path / "pr.csv")))
    assert len(rows) == len(curve)
    assert float(rows[-1]["recall"]) == curve.recall[-1]
    assert curve.to_json()["points"][0]["threshold"] == curve.thresholds[0]
