import numpy as np
import pytest

from conformal_box.geometry import Box, iou
from conformal_box.pairing import match_dataset, match_image

from conftest import random_match_instance


def test_exact_match():
    r = match_image([Box(0, 0, 10, 10)], [(Box(0, 0, 10, 10), 0.9)], 0.5)
    assert len(r.pairs) == 1 and r.pairs[0].iou == 1.0
    assert r.false_positives == () and r.false_negatives == ()


def test_confidence_first_not_best_iou():
    preds = [(Box(0, 0, 10, 10), 0.6), (Box(1, 1, 9, 9), 0.95)]
    r = match_image([Box(0, 0, 10, 10)], preds, 0.5)
    assert r.pairs[0].prediction == Box(1, 1, 9, 9)
    assert r.pairs[0].iou == pytest.approx(0.64)
    assert r.false_positives == ((Box(0, 0, 10, 10), 0.6),)


def test_single_prediction_consumed_by_first_truth():
    truths = [Box(0, 0, 10, 10), Box(1, 0, 11, 10)]
    r = match_image(truths, [(Box(0, 0, 10.5, 10), 0.8)], 0.5)
    assert len(r.pairs) == 1 and r.pairs[0].truth == truths[0]
    assert r.false_negatives == (truths[1],)


def test_tie_broken_by_input_order():
    preds = [(Box(0, 0, 10, 10), 0.5), (Box(0, 0, 9, 10), 0.5)]
    r = match_image([Box(0, 0, 10, 10)], preds, 0.5)
    assert r.pairs[0].prediction == Box(0, 0, 10, 10)


def test_threshold_inclusive():
    # iou is exactly 0.5
    r = match_image([Box(0, 0, 10, 10)], [(Box(0, 0, 5, 10), 0.9)], 0.5)
    assert len(r.pairs) == 1


def test_empty_inputs():
    r = match_image([], [], 0.5)
    assert r.counts == {"tp": 0, "fp": 0, "fn": 0}


def test_threshold_validated():
    with pytest.raises(ValueError):
        match_image([], [], 1.0)


def test_pairs_respect_threshold():
    rng = np.random.default_rng(5)
    for _ in range(300):
        truths, preds = random_match_instance(rng)
        t = float(rng.uniform(0.1, 0.9))
        for p in match_image(truths, preds, t).pairs:
            assert p.iou >= t
            assert p.iou == iou(p.truth, p.prediction)


def test_conservation_and_uniqueness():
    rng = np.random.default_rng(6)
    for _ in range(500):
        truths, preds = random_match_instance(rng)
        r = match_image(truths, preds, float(rng.uniform(0.1, 0.9)))
        assert len(r.pairs) + len(r.false_negatives) == len(truths)
        assert len(r.pairs) + len(r.false_positives) == len(preds)
        assert len({id(p.prediction) for p in r.pairs}) == len(r.pairs)


def test_permutation_invariance_with_distinct_confidences():
    rng = np.random.default_rng(7)
    for _ in range(300):
        truths, preds = random_match_instance(rng)
        perm = [preds[i] for i in rng.permutation(len(preds))]
        a = match_image(truths, preds, 0.5)
        b = match_image(truths, perm, 0.5)
        assert {(p.truth, p.prediction) for p in a.pairs} == {(p.truth, p.prediction) for p in b.pairs}


def test_threshold_monotonicity_counterexample():
    # Greedy first-above-threshold pairing is not monotone in the threshold:
    # at 0.42 the first truth grabs the high-confidence box the second truth
    # needed; at 0.5 it skips it and both truths get matched.
    truths = [Box(4, 0, 14, 10), Box(0, 0, 10, 10)]
    preds = [(Box(0, 0, 10, 10), 0.9), (Box(5, 0, 15, 10), 0.8)]
    assert len(match_image(truths, preds, 0.42).pairs) == 1
    assert len(match_image(truths, preds, 0.5).pairs) == 2


def test_match_dataset_merges_in_image_order():
    from conformal_box.synthetic import GeneratorConfig, generate
    ds = generate(GeneratorConfig(n_images=20))
    r = match_dataset(ds)
    ids = [p.image_id for p in r.pairs]
    assert ids == sorted(ids)
    assert len(r.pairs) + len(r.false_negatives) == ds.n_truths
    assert len(r.pairs) + len(r.false_positives) == ds.n_predictions
    assert r.to_json()["threshold"] == 0.5
