"""Boxes, IoU and the greedy pairing of detections with ground truth.

Run with ``python demos/01_boxes_and_pairing.py``.
"""

from conformal_box import Box, contains, iou, match_image

# %% Box arithmetic
a = Box(0, 0, 2, 2)
b = Box(1, 1, 3, 3)
print("IoU of two offset squares:", iou(a, b))            # 1/7
print("outer contains inner:", contains(Box(0, 0, 10, 10), Box(2, 2, 8, 8)))

# %% Pairing visits predictions by confidence, not by overlap
truth = Box(0, 0, 10, 10)
predictions = [(Box(0, 0, 10, 10), 0.60),   # perfect overlap, lower confidence
               (Box(1, 1, 9, 9), 0.95)]     # IoU 0.64, higher confidence
report = match_image([truth], predictions, iou_threshold=0.5)
pair = report.pairs[0]
print(f"paired prediction {tuple(pair.prediction)} (conf {pair.confidence}, IoU {pair.iou:.2f})")
print("false positives:", report.false_positives)

# %% The pairing is not monotone in the IoU threshold
truths = [Box(4, 0, 14, 10), Box(0, 0, 10, 10)]
preds = [(Box(0, 0, 10, 10), 0.9), (Box(5, 0, 15, 10), 0.8)]
for t in (0.42, 0.5):
    print(f"threshold {t}: {len(match_image(truths, preds, t).pairs)} pair(s)")
