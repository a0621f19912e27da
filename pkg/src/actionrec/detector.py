"""Linear multiclass superpixel detector and its softmax posteriors.

Training minimises the Crammer-Singer objective

    1/2 ||W||^2 + C * sum_i max(0, 1 + max_{r != y_i} w_r.s_i - w_{y_i}.s_i)

by stochastic subgradient descent (step ``1/(lambda t)`` with
``lambda = 1/(C n)``) for a fixed epoch budget, returning the average of
the second half of the iterates. Features are z-scored with statistics
stored in the model.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegenerateDataError, ShapeError

MODEL_SCHEMA = 1

# The 23 region classes of the MSRC object recognition set.
MSRC_CLASSES = (
    "building", "grass", "tree", "cow", "horse", "sheep", "sky", "mountain",
    "aeroplane", "water", "face", "car", "bicycle", "flower", "sign", "bird",
    "book", "chair", "road", "cat", "dog", "body", "boat",
)


@dataclass
class DetectorModel:
    weights: np.ndarray          # (K, feature_dim [+1 with bias])
    class_names: list
    mean: np.ndarray             # (feature_dim,)
    scale: np.ndarray            # (feature_dim,)
    append_bias: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def n_classes(self):
        return self.weights.shape[0]

    @property
    def feature_dim(self):
        return len(self.mean)

    def transform(self, S):
        S = np.atleast_2d(np.asarray(S, dtype=np.float64))
        if S.shape[1] != self.feature_dim:
            raise ShapeError(f"expected {self.feature_dim} features, got {S.shape[1]}")
        Z = (S - self.mean) / self.scale
        if self.append_bias:
            Z = np.hstack([Z, np.ones((len(Z), 1))])
        return Z

    def logits(self, S):
        return self.transform(S) @ self.weights.T

    def save(self, path):
        doc = {
            "schema_version": MODEL_SCHEMA,
            "kind": "detector",
            "class_names": list(self.class_names),
            "feature_dim": self.feature_dim,
            "append_bias": self.append_bias,
            "weights": self.weights.tolist(),
            "standardization": {"mean": self.mean.tolist(), "scale": self.scale.tolist()},
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        if doc.get("kind") != "detector" or doc.get("schema_version") != MODEL_SCHEMA:
            raise ValueError(f"{path}: not a schema-{MODEL_SCHEMA} detector model")
        std = doc["standardization"]
        return cls(
            np.asarray(doc["weights"], dtype=np.float64), list(doc["class_names"]),
            np.asarray(std["mean"], dtype=np.float64), np.asarray(std["scale"], dtype=np.float64),
            bool(doc.get("append_bias", False)), doc.get("metadata", {}),
        )


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def primal_objective(W, Z, y, C):
    """Crammer-Singer primal value on already transformed features ``Z``."""
    s = Z @ W.T
    n = len(y)
    true = s[np.arange(n), y]
    s = s.copy()
    s[np.arange(n), y] = -np.inf
    hinge = np.maximum(0.0, 1.0 + s.max(axis=1) - true)
    return 0.5 * float((W ** 2).sum()) + C * float(hinge.sum())


def train_multiclass(features, labels, C=1.0, seed=0, epochs=100, class_names=None,
                     standardize=True, append_bias=False, backend=None):
    """Train a Crammer-Singer linear classifier.

    ``labels`` are integer ids in ``0..K-1`` where K is ``len(class_names)``
    (default: ``max(labels) + 1``).
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError("features must be (n, d) with one label per row")
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("training needs at least two classes")
    if C <= 0:
        raise ValueError("C must be positive")
    K = len(class_names) if class_names is not None else int(y.max()) + 1
    if y.min() < 0 or y.max() >= K:
        raise ValueError(f"labels must lie in 0..{K - 1}")
    class_names = list(class_names) if class_names is not None else [str(k) for k in range(K)]

    d = X.shape[1]
    if standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale < 1e-12] = 1.0
    else:
        mean, scale = np.zeros(d), np.ones(d)
    model = DetectorModel(np.zeros((K, d + int(append_bias))), class_names, mean, scale, append_bias)
    Z = model.transform(X)

    n = len(y)
    lam = 1.0 / (C * n)
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(n) for _ in range(epochs)])
    W = np.zeros_like(model.weights)
    W_avg = np.zeros_like(W)
    # average the second half of the iterates
    kernels.cs_sgd_epochs(Z, y, W, W_avg, order, lam, 0, len(order) // 2 + 1, backend=backend)
    model.weights = W_avg
    model.metadata = {
        "C": C, "seed": seed, "epochs": epochs, "n_train": n,
        "objective": primal_objective(W_avg, Z, y, C),
    }
    return model


def score_matrix(model, S):
    """(T, K) posterior matrix for a stack of descriptors."""
    return softmax(model.logits(S))


def score(model, s):
    """Softmax posterior vector of one descriptor."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ShapeError("score expects a single descriptor; use score_matrix for stacks")
    return score_matrix(model, s[None, :])[0]


def predict_class(model, s):
    """Argmax class id; ties go to the lowest index."""
    return int(np.argmax(score(model, s)))
