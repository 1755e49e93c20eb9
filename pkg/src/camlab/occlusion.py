"""Occlusion-sensitivity maps: the locally-faithful reference explanation.

For each position on a stride grid, a patch of the input is replaced with a
fill value and the image is re-scored.  The map stores the drop in the
class score, so positive values mark evidence for the class.  The image is
conceptually zero-padded: patches centered near the border are cropped, and
the map always has the input's spatial size.
"""

from dataclasses import dataclass

import numpy as np

from . import nn


@dataclass
class OcclusionConfig:
    patch: int            # odd side length in pixels
    stride: int = 1
    fill: float = None    # None -> per-channel mean of the image being probed
    score_point: str = "pre_softmax"

    def __post_init__(self):
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 1, got {self.patch}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.score_point not in ("pre_softmax", "post_softmax"):
            raise ValueError(f"bad score_point {self.score_point!r}")


def default_patch(image_side):
    """Fixture analog of the paper-scale trade-off: ~side/6, rounded to odd."""
    p = max(1, round(image_side / 6))
    return p if p % 2 == 1 else p + 1


def grid_positions(extent, stride):
    return list(range(0, extent, stride))


def occlusion_map(spec, weights, image, category, config):
    """Signed heatmap [H,W]: score(original) - score(masked at p)."""
    image = np.asarray(image, dtype=np.float32)
    if not 0 <= category < spec.num_categories:
        raise ValueError(f"category {category} out of range")
    c, h, w = image.shape
    fill = config.fill
    if fill is None:
        fill_vec = image.mean(axis=(1, 2))
    else:
        fill_vec = np.full(c, fill, dtype=np.float32)

    def score(img):
        s, _ = nn.forward(spec, weights, img)
        if config.score_point == "post_softmax":
            from .ops import softmax
            return float(softmax(s)[category])
        return float(s[category])

    base = score(image)
    half = config.patch // 2
    rows = grid_positions(h, config.stride)
    cols = grid_positions(w, config.stride)
    coarse = np.zeros((len(rows), len(cols)), dtype=np.float32)
    for ri, i in enumerate(rows):
        for ci, j in enumerate(cols):
            masked = image.copy()
            y0, y1 = max(0, i - half), min(h, i + half + 1)
            x0, x1 = max(0, j - half), min(w, j + half + 1)
            masked[:, y0:y1, x0:x1] = fill_vec[:, None, None]
            coarse[ri, ci] = base - score(masked)
    if config.stride == 1:
        return coarse
    # nearest-neighbor fill between grid points
    ridx = np.clip(np.round(np.arange(h) / config.stride).astype(int), 0, len(rows) - 1)
    cidx = np.clip(np.round(np.arange(w) / config.stride).astype(int), 0, len(cols) - 1)
    return coarse[np.ix_(ridx, cidx)]
