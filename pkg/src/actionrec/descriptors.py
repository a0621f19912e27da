"""Per-superpixel descriptors: 51 appearance features + 400-bin bag of features.

Appearance layout (51 values)::

    0..39   for each channel in R, G, B, L, a, b, Y, Cr, Cb, gray:
            mean, std, skewness, excess kurtosis   (channel-major)
    40      5x5 box filter response
    41..45  Gaussian, sigma = 1, 2, 4, 8, 16
    46..50  Laplacian of Gaussian, sigma = 1, 2, 4, 8, 16

Texture responses are computed on the gray image and averaged over the
superpixel. Moments are population moments; skewness and kurtosis of a
zero-variance region are 0.

Dense gradient descriptors use 4x4 spatial cells x 8 orientation bins,
laid out as ``(cell_row, cell_col, orientation)``.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ShapeError
from .imaging import convert_colorspace, filter2d, gaussian, laplacian_of_gaussian

logger = logging.getLogger(__name__)

APPEARANCE_DIM = 51
VOCAB_SIZE = 400
DESCRIPTOR_DIM = APPEARANCE_DIM + VOCAB_SIZE
SIFT_DIM = 128

CHANNEL_NAMES = ("R", "G", "B", "L", "a", "b", "Y", "Cr", "Cb", "gray")
MOMENT_NAMES = ("mean", "std", "skew", "kurt")
TEXTURE_SIGMAS = (1, 2, 4, 8, 16)
TEXTURE_NAMES = (
    ("box5",)
    + tuple(f"gauss{s}" for s in TEXTURE_SIGMAS)
    + tuple(f"log{s}" for s in TEXTURE_SIGMAS)
)

GRID_STEP = 4
CELL_SIZES = (4, 6, 8)
N_CELLS = 4
N_ORIENTATIONS = 8
CLIP = 0.2

CODEBOOK_SCHEMA = 1


def feature_names():
    """Column names of a :data:`DESCRIPTOR_DIM`-long superpixel descriptor."""
    names = [f"{c}_{m}" for c in CHANNEL_NAMES for m in MOMENT_NAMES]
    names += [f"tex_{t}" for t in TEXTURE_NAMES]
    names += [f"bof_{i:03d}" for i in range(VOCAB_SIZE)]
    return names


# --- appearance ---------------------------------------------------------------

def _channel_stack(img):
    """(H, W, 10) stack of the colour channels used for the moments."""
    if img.channels != 3:
        raise ShapeError("appearance features need a 3-channel image")
    lab = convert_colorspace(img, "LAB").data
    ycc = convert_colorspace(img, "YCrCb").data
    gray = convert_colorspace(img, "GRAY").data
    return np.concatenate([img.data, lab, ycc, gray], axis=2)


def texture_responses(img):
    """(H, W, 11) filter responses on the gray image."""
    gray = convert_colorspace(img, "GRAY")
    maps = [filter2d(gray, np.full((5, 5), 1.0 / 25.0)).data[:, :, 0]]
    maps += [gaussian(gray, s).data[:, :, 0] for s in TEXTURE_SIGMAS]
    maps += [laplacian_of_gaussian(gray, s).data[:, :, 0] for s in TEXTURE_SIGMAS]
    return np.stack(maps, axis=-1)


def region_moments(values, labels, n_labels):
    """Population mean/std/skew/excess-kurtosis of ``values`` per label.

    ``values`` is (N, C), ``labels`` (N,). Returns (n_labels, C, 4).
    """
    counts = np.bincount(labels, minlength=n_labels).astype(np.float64)
    safe = np.maximum(counts, 1.0)[:, None]
    C = values.shape[1]

    def per_label_sum(v):
        return np.stack([np.bincount(labels, v[:, c], minlength=n_labels) for c in range(C)], axis=1)

    mean = per_label_sum(values) / safe
    centred = values - mean[labels]
    m2 = per_label_sum(centred ** 2) / safe
    m3 = per_label_sum(centred ** 3) / safe
    m4 = per_label_sum(centred ** 4) / safe
    std = np.sqrt(m2)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    std_safe = np.where(flat, 1.0, std)
    skew = np.where(flat, 0.0, m3 / std_safe ** 3)
    kurt = np.where(flat, 0.0, m4 / std_safe ** 4 - 3.0)
    std = np.where(flat, 0.0, std)
    return np.stack([mean, std, skew, kurt], axis=-1)


def appearance_matrix(img, seg):
    """(T, 51) appearance features for every superpixel of ``seg``."""
    if (seg.height, seg.width) != (img.height, img.width):
        raise ShapeError("segmentation and image sizes differ")
    labels = seg.labels.ravel()
    T = seg.n_segments
    moments = region_moments(_channel_stack(img).reshape(-1, 10), labels, T)
    tex = texture_responses(img).reshape(-1, len(TEXTURE_NAMES))
    counts = np.maximum(np.bincount(labels, minlength=T), 1).astype(np.float64)
    tex_mean = np.stack(
        [np.bincount(labels, tex[:, j], minlength=T) for j in range(tex.shape[1])], axis=1
    ) / counts[:, None]
    return np.concatenate([moments.reshape(T, 40), tex_mean], axis=1)


def appearance(img, seg, label):
    """The 51 appearance features of superpixel ``label``."""
    if not 0 <= label < seg.n_segments:
        raise IndexError(f"label {label} out of range 0..{seg.n_segments - 1}")
    mask = seg.labels == label
    sub_labels = np.zeros(mask.sum(), dtype=np.int64)
    moments = region_moments(_channel_stack(img)[mask], sub_labels, 1)
    tex = texture_responses(img)[mask].mean(axis=0)
    return np.concatenate([moments.reshape(40), tex])


# --- dense gradient descriptors ------------------------------------------------

@dataclass
class DenseGradientDescriptor:
    values: np.ndarray
    center: tuple  # (row, col) pixel
    scale: int     # cell size in pixels


@dataclass
class DenseDescriptorSet:
    """Array form of a list of dense descriptors."""
    values: np.ndarray   # (N, 128)
    centers: np.ndarray  # (N, 2) int (row, col)
    scales: np.ndarray   # (N,) cell sizes

    def __len__(self):
        return len(self.values)

    def nonzero(self):
        keep = np.any(self.values != 0.0, axis=1)
        return DenseDescriptorSet(self.values[keep], self.centers[keep], self.scales[keep])

    def to_list(self):
        return [
            DenseGradientDescriptor(v, (int(c[0]), int(c[1])), int(s))
            for v, c, s in zip(self.values, self.centers, self.scales)
        ]


def grid_origins(length, cell, step=GRID_STEP):
    """Top-left offsets of descriptors of footprint ``4 * cell`` along one axis."""
    footprint = N_CELLS * cell
    if length < footprint:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, length - footprint + 1, step, dtype=np.int64)


def _orientation_planes(gray):
    """Gradient magnitude split over 8 orientation bins with linear interpolation."""
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    pos = theta / (2 * np.pi / N_ORIENTATIONS)
    lo = np.floor(pos).astype(np.int64) % N_ORIENTATIONS
    frac = pos - np.floor(pos)
    hi = (lo + 1) % N_ORIENTATIONS
    planes = np.zeros((N_ORIENTATIONS,) + gray.shape)
    rows, cols = np.indices(gray.shape)
    np.add.at(planes, (lo, rows, cols), mag * (1.0 - frac))
    np.add.at(planes, (hi, rows, cols), mag * frac)
    return planes


def _bilinear_weights(length, centers, cell):
    """(len(centers), length) triangular weights of pixel centres around cell centres."""
    pix = np.arange(length, dtype=np.float64)
    return np.maximum(0.0, 1.0 - np.abs(pix[None, :] - centers[:, None]) / cell)


def dense_descriptor_array(img):
    """Dense descriptors at cell sizes 4, 6, 8 on a 4-pixel grid.

    Each cell accumulates gradient magnitude with bilinear spatial weights
    (support of one cell width around the cell centre) and linear
    orientation interpolation. Vectors are L2-normalised, clipped at 0.2
    and renormalised; zero-gradient descriptors stay zero. An image smaller
    than the largest footprint (32 px) yields no descriptors at all.
    """
    gray = convert_colorspace(img, "GRAY").data[:, :, 0] if img.channels == 3 else img.data[:, :, 0]
    planes = _orientation_planes(gray)
    H, W = gray.shape
    values, centers, scales = [], [], []
    if min(H, W) < N_CELLS * max(CELL_SIZES):
        return DenseDescriptorSet(np.zeros((0, SIFT_DIM)), np.zeros((0, 2), dtype=np.int64),
                                  np.zeros(0, dtype=np.int64))
    for cell in CELL_SIZES:
        oy = grid_origins(H, cell)
        ox = grid_origins(W, cell)
        if len(oy) == 0 or len(ox) == 0:
            continue
        offs = cell * np.arange(N_CELLS) + (cell - 1) / 2.0
        cy = (oy[:, None] + offs[None, :]).ravel()  # (ny * 4,)
        cx = (ox[:, None] + offs[None, :]).ravel()
        Wy = _bilinear_weights(H, cy, cell)
        Wx = _bilinear_weights(W, cx, cell)
        cells = np.matmul(np.matmul(Wy, planes), Wx.T)  # (o, ny * 4, nx * 4)
        ny, nx = len(oy), len(ox)
        cells = cells.reshape(N_ORIENTATIONS, ny, N_CELLS, nx, N_CELLS)
        desc = cells.transpose(1, 3, 2, 4, 0).reshape(ny * nx, SIFT_DIM)
        values.append(desc)
        half = N_CELLS * cell // 2
        gy_, gx_ = np.meshgrid(oy + half, ox + half, indexing="ij")
        centers.append(np.stack([gy_.ravel(), gx_.ravel()], axis=1))
        scales.append(np.full(ny * nx, cell, dtype=np.int64))
    if not values:
        return DenseDescriptorSet(np.zeros((0, SIFT_DIM)), np.zeros((0, 2), dtype=np.int64),
                                  np.zeros(0, dtype=np.int64))
    values = _normalise(np.concatenate(values))
    return DenseDescriptorSet(values, np.concatenate(centers), np.concatenate(scales))


def _normalise(desc):
    norm = np.linalg.norm(desc, axis=1, keepdims=True)
    out = np.divide(desc, norm, out=np.zeros_like(desc), where=norm > 1e-12)
    out = np.minimum(out, CLIP)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return np.divide(out, norm, out=np.zeros_like(out), where=norm > 0)


def dense_descriptors(img):
    return dense_descriptor_array(img).to_list()


# --- codebook -----------------------------------------------------------------

@dataclass
class Codebook:
    centroids: np.ndarray
    trained_on: str = ""
    seed: int = 0
    history: list = field(default_factory=list)

    @property
    def size(self):
        return len(self.centroids)

    def save(self, path):
        doc = {
            "schema_version": CODEBOOK_SCHEMA,
            "kind": "codebook",
            "size": self.size,
            "dim": int(self.centroids.shape[1]),
            "trained_on": self.trained_on,
            "seed": self.seed,
            "centroids": self.centroids.tolist(),
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        if doc.get("kind") != "codebook" or doc.get("schema_version") != CODEBOOK_SCHEMA:
            raise ValueError(f"{path}: not a schema-{CODEBOOK_SCHEMA} codebook file")
        return cls(np.asarray(doc["centroids"], dtype=np.float64), doc.get("trained_on", ""),
                   doc.get("seed", 0))


def _as_matrix(descs):
    if isinstance(descs, DenseDescriptorSet):
        return descs.values
    if isinstance(descs, np.ndarray):
        return np.atleast_2d(descs).astype(np.float64)
    if len(descs) == 0:
        return np.zeros((0, SIFT_DIM))
    return np.stack([np.asarray(getattr(d, "values", d), dtype=np.float64) for d in descs])


def nearest_centroid(X, centroids, chunk=2048):
    """Index of and squared distance to the nearest centroid; ties -> lowest index."""
    idx = np.empty(len(X), dtype=np.int64)
    dist = np.empty(len(X))
    c_sq = (centroids ** 2).sum(axis=1)
    for start in range(0, len(X), chunk):
        xb = X[start:start + chunk]
        d2 = (xb ** 2).sum(axis=1)[:, None] - 2.0 * xb @ centroids.T + c_sq[None, :]
        best = d2.min(axis=1, keepdims=True)
        # the expanded form is inexact; recheck near-ties with direct differences
        near = d2 <= best + 1e-9 * np.maximum(1.0, np.abs(best))
        for r in np.flatnonzero(near.sum(axis=1) > 1):
            cand = np.flatnonzero(near[r])
            exact = ((centroids[cand] - xb[r]) ** 2).sum(axis=1)
            j = cand[np.argmin(exact)]
            d2[r] = np.inf
            d2[r, j] = exact.min()
        i = np.argmin(d2, axis=1)
        idx[start:start + chunk] = i
        dist[start:start + chunk] = ((xb - centroids[i]) ** 2).sum(axis=1)
    return idx, dist


def _kmeans_pp(X, k, rng):
    n = len(X)
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise InsufficientDataError("k-means++ ran out of distinct points")
        nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[centers].copy()


def fingerprint(X):
    return hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()[:16]


def train_codebook(descs, seed=0, k=VOCAB_SIZE, max_iter=100):
    """Lloyd's k-means with k-means++ seeding.

    Stops when no assignment changes or after ``max_iter`` iterations.
    Empty clusters are re-seeded from the points farthest from their
    centroid. ``Codebook.history`` records the quantisation error after
    each assignment step.
    """
    X = _as_matrix(descs)
    X = X[np.any(X != 0.0, axis=1)]
    n_distinct = len(np.unique(X, axis=0)) if len(X) else 0
    if n_distinct < k:
        raise InsufficientDataError(f"need at least {k} distinct non-zero descriptors, got {n_distinct}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(X, k, rng)
    assign = None
    history = []
    for it in range(max_iter):
        new_assign, dist = nearest_centroid(X, centroids)
        history.append(float(dist.sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assign, X)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if len(empty):
            far = np.argsort(-dist, kind="stable")[:len(empty)]
            centroids[empty] = X[far]
            logger.debug("iteration %d: re-seeded %d empty clusters", it, len(empty))
    return Codebook(centroids, trained_on=fingerprint(X), seed=seed, history=history)


# --- bag of features ----------------------------------------------------------

def bof_histogram(descs, book):
    """L1-normalised hard-assignment histogram; zero descriptors are ignored."""
    X = _as_matrix(descs)
    X = X[np.any(X != 0.0, axis=1)] if len(X) else X
    hist = np.zeros(book.size)
    if len(X) == 0:
        return hist
    idx, _ = nearest_centroid(X, book.centroids)
    hist += np.bincount(idx, minlength=book.size)
    return hist / hist.sum()


def describe_superpixels(img, seg, book, dense=None):
    """(T, 51 + book.size) descriptor matrix for all superpixels of ``seg``.

    Dense descriptors are assigned to the superpixel containing their
    centre pixel.
    """
    app = appearance_matrix(img, seg)
    T = seg.n_segments
    dense = (dense if dense is not None else dense_descriptor_array(img)).nonzero()
    hist = np.zeros((T, book.size))
    if len(dense):
        words, _ = nearest_centroid(dense.values, book.centroids)
        owner = seg.labels[dense.centers[:, 0], dense.centers[:, 1]]
        np.add.at(hist, (owner, words), 1.0)
        totals = hist.sum(axis=1, keepdims=True)
        hist = np.divide(hist, totals, out=np.zeros_like(hist), where=totals > 0)
    return np.concatenate([app, hist], axis=1)


def superpixel_descriptor(img, seg, label, book):
    """Descriptor of a single superpixel: appearance then histogram."""
    dense = dense_descriptor_array(img).nonzero()
    inside = seg.labels[dense.centers[:, 0], dense.centers[:, 1]] == label
    return np.concatenate([appearance(img, seg, label), bof_histogram(dense.values[inside], book)])
