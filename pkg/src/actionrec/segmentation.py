"""Graph-based over-segmentation into superpixels.

Pixels are nodes of a 4-neighbour grid graph weighted by the Euclidean
colour distance of the smoothed image (on a 0..255 scale). Edges are
processed in ascending weight; two regions merge when the edge weight does
not exceed either region's internal difference plus ``k / |C|``. A second
pass over the same edge order absorbs regions smaller than ``min_size``
into the neighbour across their cheapest edge.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import FormatError, ShapeError, ValidationError
from .imaging import read_pnm, write_pnm


@dataclass(frozen=True)
class SegmentationParams:
    sigma: float = 0.8
    k: float = 300.0
    min_size: int = 100

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")
        if self.k <= 0:
            raise ValidationError("k must be > 0")
        if self.min_size < 1:
            raise ValidationError("min_size must be >= 1")


@dataclass(frozen=True)
class SegmentLabelMap:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ShapeError("label map must be 2-D")
        present = np.unique(labels)
        if present[0] != 0 or present[-1] != len(present) - 1:
            raise ValidationError("labels must be contiguous integers 0..T-1")
        object.__setattr__(self, "labels", labels)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def n_segments(self):
        return int(self.labels.max()) + 1


class SuperpixelStat(NamedTuple):
    label: int
    count: int
    bbox: tuple  # (row_min, col_min, row_max, col_max), inclusive


def grid_edges(height, width):
    """Right and down edges of every pixel, in row-major edge order."""
    idx = np.arange(height * width, dtype=np.int64).reshape(height, width)
    a = np.full((height, width, 2), -1, dtype=np.int64)
    b = np.full((height, width, 2), -1, dtype=np.int64)
    a[:, :-1, 0] = idx[:, :-1]
    b[:, :-1, 0] = idx[:, 1:]
    a[:-1, :, 1] = idx[:-1, :]
    b[:-1, :, 1] = idx[1:, :]
    a = a.ravel()
    b = b.ravel()
    keep = a >= 0
    return a[keep], b[keep]


def relabel_first_appearance(roots, shape):
    """Map arbitrary component ids to 0..T-1 in row-major order of first pixel."""
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse].reshape(shape)


def segment(img, params=None, backend=None):
    """Over-segment a 3-channel image; returns a :class:`SegmentLabelMap`."""
    params = params or SegmentationParams()
    if img.channels != 3:
        raise ShapeError("segmentation expects a 3-channel image")
    rgb = img.data * 255.0
    if params.sigma > 0:
        rgb = np.stack(
            [ndimage.gaussian_filter(rgb[:, :, c], params.sigma, mode="nearest") for c in range(3)],
            axis=-1,
        )
    height, width = img.height, img.width
    a, b = grid_edges(height, width)
    flat = rgb.reshape(-1, 3)
    w = np.sqrt(((flat[a] - flat[b]) ** 2).sum(axis=1))
    order = np.argsort(w, kind="stable")
    roots = kernels.merge_components(
        a[order], b[order], w[order], height * width, params.k, params.min_size, backend=backend)
    return SegmentLabelMap(relabel_first_appearance(roots, (height, width)))


def superpixel_stats(seg):
    labels = seg.labels
    counts = np.bincount(labels.ravel(), minlength=seg.n_segments)
    stats = []
    for lab, sl in enumerate(ndimage.find_objects(labels + 1)):
        rows, cols = sl
        bbox = (rows.start, cols.start, rows.stop - 1, cols.stop - 1)
        stats.append(SuperpixelStat(lab, int(counts[lab]), bbox))
    return stats


def save_labels(path, seg):
    """Write labels as a P5 PGM; 16-bit (maxval 65535) when T > 255."""
    t = seg.n_segments
    if t > 65536:
        raise ShapeError(f"{t} segments do not fit a 16-bit PGM")
    write_pnm(path, seg.labels, 65535 if t > 255 else 255)


def load_labels(path):
    raw, _ = read_pnm(path)
    if raw.shape[2] != 1:
        raise FormatError(f"{path}: label maps must be single-channel PGM")
    labels = raw[:, :, 0]
    present = np.unique(labels)
    if present[0] != 0 or present[-1] != len(present) - 1:
        raise FormatError(f"{path}: labels are not contiguous 0..T-1")
    return SegmentLabelMap(labels)
