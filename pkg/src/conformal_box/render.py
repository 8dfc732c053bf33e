"""SVG overlays: prediction in blue, conformal box in green, truth in red."""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Sequence

from .conformal import MarginSet, conformalize
from .dataset_io import GroundTruthRecord
from .geometry import Box
from .pairing import MatchedPair

logger = logging.getLogger(__name__)

PREDICTION_COLOR = "blue"
CONFORMAL_COLOR = "green"
TRUTH_COLOR = "red"


def _rect(parent, box: Box, color: str, cls: str, width: float = 2.0) -> None:
    ET.SubElement(parent, "rect", {
        "class": cls,
        "x": f"{box.x_min:.3f}", "y": f"{box.y_min:.3f}",
        "width": f"{box.width:.3f}", "height": f"{box.height:.3f}",
        "fill": "none", "stroke": color, "stroke-width": f"{width:g}",
    })


def render_overlay(record: GroundTruthRecord, pairs: Sequence[MatchedPair],
                   margins: MarginSet | None = None, image_path=None,
                   clamp_to_frame: bool = False) -> str:
    """SVG document for one image.

    Every ground-truth box is drawn in red, each matched prediction in blue
    and, when ``margins`` is given, its conformal box in green. A raster
    underlay is referenced (not decoded) when ``image_path`` exists;
    otherwise the frame is left blank.
    """
    w, h = record.image_width, record.image_height
    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(w), "height": str(h), "viewBox": f"0 0 {w} {h}",
    })
    ET.SubElement(svg, "title").text = f"image {record.image_id}"
    if image_path is not None and Path(image_path).is_file():
        ET.SubElement(svg, "image", {
            "href": Path(image_path).resolve().as_uri(),
            "x": "0", "y": "0", "width": str(w), "height": str(h),
        })
    else:
        if image_path is not None:
            logger.warning("image %s not found; drawing on a blank frame", image_path)
        ET.SubElement(svg, "rect", {"class": "frame", "x": "0", "y": "0", "width": str(w),
                                    "height": str(h), "fill": "white"})
    frame = record.frame if clamp_to_frame else None
    for pair in pairs:
        if margins is not None:
            _rect(svg, conformalize(pair.prediction, margins, frame), CONFORMAL_COLOR, "conformal")
        _rect(svg, pair.prediction, PREDICTION_COLOR, "prediction")
    for t in record.boxes:
        _rect(svg, t, TRUTH_COLOR, "truth")
    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"
