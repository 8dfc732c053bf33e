import json

import numpy as np
import pytest
from hypothesis import strategies as st

from conformal_box.geometry import Box


@st.composite
def boxes(draw, lo=-50.0, hi=150.0, min_size=0.0, max_size=80.0):
    x = draw(st.floats(lo, hi, allow_nan=False))
    y = draw(st.floats(lo, hi, allow_nan=False))
    w = draw(st.floats(min_size, max_size, allow_nan=False))
    h = draw(st.floats(min_size, max_size, allow_nan=False))
    return Box(x, y, x + w, y + h)


def random_box(rng, span=60.0, min_size=5.0, max_size=30.0):
    x, y = rng.uniform(0, span, 2)
    w, h = rng.uniform(min_size, max_size, 2)
    return Box(float(x), float(y), float(x + w), float(y + h))


def jitter(rng, box, sd=3.0):
    b = np.array(list(box)) + rng.normal(0, sd, 4)
    b[[0, 2]] = np.sort(b[[0, 2]])
    b[[1, 3]] = np.sort(b[[1, 3]])
    return Box(*map(float, b))


def random_match_instance(rng):
    """Crowded single-image instance: jittered detections plus spurious boxes."""
    truths = [random_box(rng) for _ in range(rng.integers(0, 6))]
    preds = [(jitter(rng, t), float(rng.random())) for t in truths if rng.random() < 0.8]
    preds += [(random_box(rng), float(rng.random())) for _ in range(rng.integers(0, 3))]
    return truths, preds


@pytest.fixture
def coco_files(tmp_path):
    gt = {
        "images": [
            {"id": 1, "width": 1280, "height": 720, "file_name": "a.jpg"},
            {"id": 2, "width": 1280, "height": 720, "file_name": "b.jpg"},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 20, 30, 40]},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [100, 100, 50, 50]},
            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [200.5, 300.25, 60, 20]},
        ],
        "categories": [{"id": 1, "name": "traffic light"}],
    }
    pred = [
        {"image_id": 1, "category_id": 1, "bbox": [12, 21, 26, 38], "score": 0.9},
        {"image_id": 1, "category_id": 1, "bbox": [102, 99, 47, 52], "score": 0.8},
        {"image_id": 2, "category_id": 1, "bbox": [201, 301, 57, 18], "score": 0.7},
        {"image_id": 2, "category_id": 1, "bbox": [600, 400, 30, 30], "score": 0.3},
    ]
    gt_path, pred_path = tmp_path / "gt.json", tmp_path / "pred.json"
    gt_path.write_text(json.dumps(gt))
    pred_path.write_text(json.dumps(pred))
    return gt_path, pred_path


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
