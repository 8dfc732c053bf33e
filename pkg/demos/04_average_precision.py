"""Average Precision at two IoU levels, and a precision-recall curve export.

Run with ``python demos/04_average_precision.py``.
"""

import tempfile
from pathlib import Path

from conformal_box import GeneratorConfig, NoiseModel, average_precision, generate
from conformal_box.metrics import precision_recall_curve

for scale in (0.02, 0.1, 0.2):
    ds = generate(GeneratorConfig(n_images=300, noise=NoiseModel(edge_noise_scale=scale)))
    print(f"edge noise {scale:.0%}: AP@0.3 = {average_precision(ds, 0.3):.3f}, "
          f"AP@0.8 = {average_precision(ds, 0.8):.3f}")

curve = precision_recall_curve(ds, 0.3)
out = Path(tempfile.mkdtemp()) / "pr_curve.csv"
curve.to_csv(out)
print(f"{len(curve)} operating points written to {out}")
