"""Quantitative protocols: weak localization, pointing game, faithfulness.

Localization binarizes a heatmap at a fraction of its max, keeps the
largest 8-connected segment, and scores its tight bounding box against the
ground truth by IoU.  The pointing game checks whether the heatmap argmax
falls inside the ground-truth mask.  Faithfulness is Spearman rank
correlation between an explanation map and the occlusion map.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imaging import bilinear_resize


class NoSegmentError(ValueError):
    """Heatmap has no positive mass; caller counts a localization miss."""


class ProtocolError(ValueError):
    """Protocol precondition violated (e.g. empty ground-truth mask)."""


@dataclass(frozen=True)
class BBox:
    x0: int
    y0: int
    x1: int  # inclusive
    y1: int  # inclusive

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self):
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)


def iou(a, b):
    ix0, iy0 = max(a.x0, b.x0), max(a.y0, b.y0)
    ix1, iy1 = min(a.x1, b.x1), min(a.y1, b.y1)
    if ix0 > ix1 or iy0 > iy1:
        return 0.0
    inter = (ix1 - ix0 + 1) * (iy1 - iy0 + 1)
    return inter / (a.area + b.area - inter)


_EIGHT = np.ones((3, 3), dtype=int)


def extract_bbox(heat, threshold_frac=0.15):
    """Tight box of the largest 8-connected segment above the threshold.

    Threshold is threshold_frac * max(heat); size ties go to the component
    containing the smallest row-major pixel index.
    """
    heat = np.asarray(heat)
    m = float(heat.max(initial=0.0))
    if m <= 0:
        raise NoSegmentError("heatmap has no positive values")
    mask = heat >= threshold_frac * m
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        raise NoSegmentError("no pixels above threshold")
    sizes = np.bincount(labels.ravel())[1:]
    best_size = sizes.max()
    candidates = np.flatnonzero(sizes == best_size) + 1
    if len(candidates) == 1:
        pick = candidates[0]
    else:
        flat = labels.ravel()
        pick = min(candidates,
                   key=lambda lab: int(np.flatnonzero(flat == lab)[0]))
    ys, xs = np.nonzero(labels == pick)
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


@dataclass
class EvalRecord:
    """Per-image outcome; only the fields for the protocols run are set."""
    image_id: str
    true_category: int
    predictions: list                      # top-k category indices
    boxes: list = None                     # BBox or None, parallel to predictions
    gt_box: BBox = None
    outcomes: dict = field(default_factory=dict)  # method -> hit/miss/rho


def localization_error(records, iou_threshold=0.5):
    """Top-1 and top-5 localization error rates.

    An image is correct at top-k if any of its first k predictions names
    the true category and that prediction's box reaches the IoU threshold.
    """
    top1 = top5 = 0
    for rec in records:
        ok = [p == rec.true_category and box is not None
              and rec.gt_box is not None and iou(box, rec.gt_box) >= iou_threshold
              for p, box in zip(rec.predictions, rec.boxes)]
        top1 += not any(ok[:1])
        top5 += not any(ok[:5])
    n = len(records)
    return top1 / n, top5 / n


def heatmap_argmax(heat):
    """(row, col) of the max; ties resolved to the first in row-major order."""
    heat = np.asarray(heat)
    idx = int(np.argmax(heat))
    return idx // heat.shape[1], idx % heat.shape[1]


def pointing_game(heat, gt_mask):
    """Hit iff the heatmap argmax lies inside the ground-truth mask."""
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if not gt_mask.any():
        raise ProtocolError("empty ground-truth mask")
    heat = np.asarray(heat)
    if heat.shape != gt_mask.shape:
        heat = bilinear_resize(heat, gt_mask.shape[1], gt_mask.shape[0])
    r, c = heatmap_argmax(heat)
    return bool(gt_mask[r, c])


def calibrate_pointing_threshold(present_maxima, absent_maxima):
    """Midpoint of the mean max over present maps and over absent maps."""
    if not present_maxima or not absent_maxima:
        raise ProtocolError("calibration needs both present and absent maps")
    return (float(np.mean(present_maxima)) + float(np.mean(absent_maxima))) / 2


def modified_pointing(heats, gt_categories, gt_masks, threshold):
    """Pointing game over top-5 maps with a rejection option.

    heats: list of (category, heatmap) for the model's top predictions.
    A category absent from gt_categories is a hit iff its map max is below
    the threshold (correct rejection).  A present category is a hit iff its
    map max reaches the threshold and the plain pointing game hits.
    """
    out = {}
    for category, heat in heats:
        peak = float(np.asarray(heat).max())
        if category not in gt_categories:
            out[category] = peak < threshold
        else:
            out[category] = (peak >= threshold
                             and pointing_game(heat, gt_masks[category]))
    return out


def _average_ranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def rank_correlation(a, b):
    """Spearman rho with average ranks for ties; NaN if either map is constant.

    Maps of different resolution are aligned by bilinearly upsampling `a`
    to `b`'s resolution.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        a = bilinear_resize(a, b.shape[1], b.shape[0]).astype(np.float64)
    ra = _average_ranks(a.ravel())
    rb = _average_ranks(b.ravel())
    sa, sb = ra.std(), rb.std()
    if sa == 0 or sb == 0:
        return math.nan
    cov = ((ra - ra.mean()) * (rb - rb.mean())).mean()
    return float(cov / (sa * sb))


def write_report(metrics, path):
    """Machine-readable summary: one `key=value` line per metric."""
    with open(path, "w", encoding="ascii") as fh:
        for key in sorted(metrics):
            fh.write(f"{key}={metrics[key]}\n")


def format_report(metrics):
    return "\n".join(f"{k} = {metrics[k]}" for k in sorted(metrics))
