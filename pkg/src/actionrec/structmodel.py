"""Latent structural SVM over superpixel states and a binary action label.

An example is a ``(T, K)`` array ``x`` of superpixel posteriors; the latent
assignment ``h`` holds one state per superpixel (0-based, ``0..K-1``) and
``y`` is the action label in ``{0, 1}``. The joint feature vector has
three blocks, in this order:

* measurement (K*K): ``x[t]`` placed in row ``h[t]`` and summed over t;
* state (K*K): counts of ordered pairs ``(h[t], h[u])``, ``t != u``;
* class (2K): counts of ``(y, h[t])``.

so that ``w . psi(x, h, y)`` is the usual unary + fully connected pairwise
+ label-state score. The single-feature helpers ``feature_measurement``,
``feature_state`` and ``feature_class`` take 1-based states.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import CapacityError, DegenerateDataError, DomainError, ShapeError

logger = logging.getLogger(__name__)

MODEL_SCHEMA = 1
MAX_SWEEPS = 50
EXACT_LIMIT = 10 ** 7


def param_length(K):
    return 2 * K * K + 2 * K


@dataclass
class ActionModel:
    w: np.ndarray
    n_states: int
    normalize_pairs: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.shape != (param_length(self.n_states),):
            raise ShapeError(
                f"K={self.n_states} needs {param_length(self.n_states)} parameters, got {self.w.shape}")

    @classmethod
    def zeros(cls, K, normalize_pairs=False):
        return cls(np.zeros(param_length(K)), K, normalize_pairs)

    @classmethod
    def from_blocks(cls, measurement, state, klass, normalize_pairs=False):
        measurement = np.asarray(measurement, dtype=np.float64)
        K = measurement.shape[0]
        w = np.concatenate([measurement.ravel(), np.asarray(state, dtype=np.float64).ravel(),
                            np.asarray(klass, dtype=np.float64).ravel()])
        return cls(w, K, normalize_pairs)

    @property
    def w_meas(self):
        K = self.n_states
        return self.w[:K * K].reshape(K, K)

    @property
    def w_state(self):
        K = self.n_states
        return self.w[K * K:2 * K * K].reshape(K, K)

    @property
    def w_class(self):
        K = self.n_states
        return self.w[2 * K * K:].reshape(2, K)

    def save(self, path):
        if not np.all(np.isfinite(self.w)):
            raise ValueError("model has non-finite parameters")
        doc = {
            "schema_version": MODEL_SCHEMA,
            "kind": "action_model",
            "K": self.n_states,
            "normalize_pairs": self.normalize_pairs,
            "blocks": {
                "measurement": self.w_meas.tolist(),
                "state": self.w_state.tolist(),
                "class": self.w_class.tolist(),
            },
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path):
        doc = json.loads(Path(path).read_text())
        if doc.get("kind") != "action_model" or doc.get("schema_version") != MODEL_SCHEMA:
            raise ValueError(f"{path}: not a schema-{MODEL_SCHEMA} action model")
        b = doc["blocks"]
        model = cls.from_blocks(b["measurement"], b["state"], b["class"], doc.get("normalize_pairs", False))
        if model.n_states != doc["K"]:
            raise ValueError(f"{path}: block shapes disagree with K={doc['K']}")
        model.metadata = doc.get("metadata", {})
        return model


class Prediction(NamedTuple):
    y: int
    h: np.ndarray
    score: float


def _as_measurements(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"measurements must be a non-empty (T, K) array, got shape {x.shape}")
    return x


def _check_state(j, K):
    if not 1 <= j <= K:
        raise DomainError(f"state {j} outside 1..{K}")


# --- feature map ----------------------------------------------------------------

def feature_measurement(x_t, j):
    """Measurement feature for state ``j`` (1-based): ``x_t`` at offset K(j-1)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    K = len(x_t)
    _check_state(j, K)
    out = np.zeros(K * K)
    out[K * (j - 1):K * j] = x_t
    return out


def feature_state(j, k, K):
    """Co-occurrence indicator of ordered states (j, k), 1-based."""
    _check_state(j, K)
    _check_state(k, K)
    out = np.zeros(K * K)
    out[K * (j - 1) + k - 1] = 1.0
    return out


def feature_class(y, j, K):
    """Indicator of action label ``y`` with state ``j`` (1-based)."""
    if y not in (0, 1):
        raise DomainError(f"action label must be 0 or 1, got {y}")
    _check_state(j, K)
    out = np.zeros(2 * K)
    out[y * K + j - 1] = 1.0
    return out


def _pair_scale(normalize_pairs, T):
    return 1.0 / (T - 1) if normalize_pairs and T > 1 else 1.0


def joint_feature(x, h, y, normalize_pairs=False):
    x = _as_measurements(x)
    T, K = x.shape
    h = np.asarray(h, dtype=np.int64)
    if h.shape != (T,):
        raise ShapeError(f"latent assignment has length {h.size}, expected {T}")
    if y not in (0, 1):
        raise DomainError(f"action label must be 0 or 1, got {y}")
    onehot = np.zeros((T, K))
    onehot[np.arange(T), h] = 1.0
    counts = onehot.sum(axis=0)
    pairs = (np.outer(counts, counts) - np.diag(counts)) * _pair_scale(normalize_pairs, T)
    klass = np.zeros((2, K))
    klass[y] = counts
    return np.concatenate([(onehot.T @ x).ravel(), pairs.ravel(), klass.ravel()])


def joint_score(model, x, h, y):
    return float(model.w @ joint_feature(x, h, y, model.normalize_pairs))


# --- inference ----------------------------------------------------------------------

def init_latent(x):
    """Per-superpixel argmax of the detector posteriors (ties -> lowest state)."""
    return np.argmax(_as_measurements(x), axis=1).astype(np.int64)


def _unary(model, x):
    return x @ model.w_meas.T  # [t, k] = w_meas[k] . x[t]


def _pair_matrix(model, T):
    Ws = model.w_state
    return (Ws + Ws.T) * _pair_scale(model.normalize_pairs, T)


def complete_latent(model, x, y, h_init=None, max_sweeps=MAX_SWEEPS, backend=None):
    """Greedy coordinate ascent over states with the label clamped to ``y``.

    Without ``h_init`` each superpixel starts at the argmax of its unary
    plus label-state terms. Returns ``(h, score, sweeps)``.
    """
    x = _as_measurements(x)
    T = len(x)
    unary = _unary(model, x) + model.w_class[y]
    if h_init is None:
        h = np.argmax(unary, axis=1).astype(np.int64)
    else:
        h = np.array(h_init, dtype=np.int64)
    sweeps = kernels.greedy_sweeps(unary, _pair_matrix(model, T), h, max_sweeps, backend=backend)
    return h, joint_score(model, x, h, y), sweeps


def _per_label(model, x, max_sweeps, backend):
    return [complete_latent(model, x, y, None, max_sweeps, backend)[:2] for y in (0, 1)]


def infer_greedy(model, x, max_sweeps=MAX_SWEEPS, backend=None):
    """Approximate argmax over (y, h): greedy sweeps for each y, keep the better."""
    (h0, s0), (h1, s1) = _per_label(model, x, max_sweeps, backend)
    if s1 > s0:
        return Prediction(1, h1, s1)
    return Prediction(0, h0, s0)


def infer_loss_augmented(model, x, y_gt, max_sweeps=MAX_SWEEPS, backend=None):
    """Greedy inference with a unit bonus on the label differing from ``y_gt``.

    The returned score includes the bonus.
    """
    per = _per_label(model, x, max_sweeps, backend)
    s = [per[y][1] + (1.0 if y != y_gt else 0.0) for y in (0, 1)]
    y = 1 if s[1] > s[0] else 0
    return Prediction(y, per[y][0], s[y])


def _enumerated_scores(model, x, y, flat):
    T, K = x.shape
    H = np.stack(np.unravel_index(flat, (K,) * T), axis=1)
    U = _unary(model, x)
    meas = U[np.arange(T), H].sum(axis=1)
    C = np.zeros((len(flat), K))
    for t in range(T):
        C[np.arange(len(flat)), H[:, t]] += 1.0
    Ws = model.w_state
    pair = np.einsum("nj,jk,nk->n", C, Ws, C) - C @ np.diag(Ws)
    return meas + pair * _pair_scale(model.normalize_pairs, T) + C @ model.w_class[y]


def infer_exact(model, x, y=None, loss_for=None, limit=EXACT_LIMIT, chunk=1 << 18):
    """Exhaustive argmax over (y, h), optionally with ``y`` fixed.

    ``loss_for`` adds the unit loss against that ground-truth label (loss-
    augmented brute force). Ties go to y = 0, then the lexicographically
    smallest h.
    """
    x = _as_measurements(x)
    T, K = x.shape
    ys = (0, 1) if y is None else (y,)
    n_h = K ** T
    if n_h * len(ys) > limit:
        raise CapacityError(f"{len(ys)} x {K}^{T} assignments exceed the limit of {limit}")
    scores = []
    for yy in ys:
        bonus = 1.0 if loss_for is not None and yy != loss_for else 0.0
        s = np.concatenate([
            _enumerated_scores(model, x, yy, np.arange(lo, min(lo + chunk, n_h)))
            for lo in range(0, n_h, chunk)
        ])
        scores.append(s + bonus)
    scores = np.concatenate(scores)
    best = scores.max()
    # rescore near-ties with joint_score so the result is comparable to greedy output
    cand = np.flatnonzero(scores >= best - 1e-9 * max(1.0, abs(best)))
    if len(cand) > 1000:
        cand = np.flatnonzero(scores == best)[:1]
    top = None
    for idx in cand:
        yy = ys[idx // n_h]
        h = np.array(np.unravel_index(idx % n_h, (K,) * T), dtype=np.int64)
        s = joint_score(model, x, h, yy)
        if loss_for is not None and yy != loss_for:
            s += 1.0
        if top is None or s > top.score:
            top = Prediction(yy, h, s)
    return top


# --- learning -----------------------------------------------------------------------

@dataclass
class TrainConfig:
    C: float = 1.0
    epochs: int = 50
    max_rounds: int = 10
    max_sweeps: int = MAX_SWEEPS
    seed: int = 0
    normalize_pairs: bool = False
    # margin against (y_i, h) with h != h_i* as well as against the other label
    same_label_constraints: bool = True
    risk_tolerance: float = 1e-3


def _most_violated(model, x, y_gt, h_gt, cfg, backend):
    """Feature vector and margin-augmented score of the most violating output."""
    per = _per_label(model, x, cfg.max_sweeps, backend)
    other = 1 - y_gt
    cands = [(per[other][1] + 1.0, other, per[other][0])]
    h_same, s_same = per[y_gt]
    if cfg.same_label_constraints:
        if not np.array_equal(h_same, h_gt):
            cands.append((s_same + 1.0, y_gt, h_same))
    else:
        cands.append((s_same, y_gt, h_same))
    value, y, h = max(cands, key=lambda c: c[0])
    return joint_feature(x, h, y, model.normalize_pairs), value


def _check_data(data):
    if not data:
        raise DegenerateDataError("no training examples")
    labels = {int(y) for _, y in data}
    if labels != {0, 1}:
        raise DegenerateDataError(f"training needs both action labels, got {sorted(labels)}")
    Ks = {_as_measurements(x).shape[1] for x, _ in data}
    if len(Ks) != 1:
        raise ShapeError(f"examples disagree on the number of states: {sorted(Ks)}")
    return Ks.pop()


def regularized_risk(model, data, C, latents=None, same_label_constraints=True,
                     max_sweeps=MAX_SWEEPS, backend=None):
    """``1/2 ||w||^2 + C * sum_i slack_i`` with slacks from greedy violators.

    Without ``latents`` the ground-truth states are completed greedily from
    the detector argmax.
    """
    cfg = TrainConfig(C=C, same_label_constraints=same_label_constraints, max_sweeps=max_sweeps)
    total = 0.0
    for i, (x, y) in enumerate(data):
        x = _as_measurements(x)
        if latents is None:
            h_gt = complete_latent(model, x, y, init_latent(x), max_sweeps, backend)[0]
        else:
            h_gt = latents[i]
        _, value = _most_violated(model, x, y, h_gt, cfg, backend)
        total += max(0.0, value - joint_score(model, x, h_gt, y))
    return 0.5 * float(model.w @ model.w) + C * total


def _solve_ssvm(data, latents, K, cfg, rng, backend):
    """Stochastic subgradient on the margin-rescaled hinge for fixed latents."""
    N = len(data)
    lam = 1.0 / (cfg.C * N)
    model = ActionModel.zeros(K, cfg.normalize_pairs)
    w = model.w
    w_avg = np.zeros_like(w)
    gt = [joint_feature(x, h, y, cfg.normalize_pairs) for (x, y), h in zip(data, latents)]
    avg_from = cfg.epochs * N // 2 + 1
    t = 0
    for _ in range(cfg.epochs):
        for i in rng.permutation(N):
            t += 1
            eta = 1.0 / (lam * t)
            x, y = data[i]
            feat, value = _most_violated(model, x, y, latents[i], cfg, backend)
            violated = value - w @ gt[i] > 0.0
            w *= 1.0 - eta * lam
            if violated:
                w -= eta * (feat - gt[i])
            if t >= avg_from:
                w_avg += (w - w_avg) / (t - avg_from + 1)
    return ActionModel(w_avg, K, cfg.normalize_pairs)


def _fingerprint(data, cfg):
    hsh = hashlib.sha256(json.dumps(asdict(cfg), sort_keys=True).encode())
    for x, y in data:
        hsh.update(np.ascontiguousarray(x, dtype=np.float64).tobytes())
        hsh.update(bytes([int(y)]))
    return hsh.hexdigest()[:16]


def fit_lssvm(data, C=None, config=None, backend=None, **overrides):
    """CCCP training of the latent structural SVM; returns ``(model, latents)``.

    ``data`` is a list of ``(x, y)``. Round 0 uses the detector argmax as
    latent states; each round solves the convex problem for fixed latents,
    keeps the previous weights if the new ones do not lower the objective,
    then recompletes the latents greedily with ``y`` clamped, starting from
    the previous assignment. Stops when no latent state changes or after
    ``max_rounds``. The per-round objective is logged in
    ``model.metadata["history"]``.
    """
    cfg = config or TrainConfig()
    if C is not None:
        overrides["C"] = C
    cfg = replace(cfg, **overrides)
    if cfg.C <= 0:
        raise ValueError("C must be positive")
    K = _check_data(data)
    data = [(_as_measurements(x), int(y)) for x, y in data]
    rng = np.random.default_rng(cfg.seed)

    def risk(m, lat):
        return regularized_risk(m, data, cfg.C, lat, cfg.same_label_constraints, cfg.max_sweeps, backend)

    latents = [init_latent(x) for x, _ in data]
    prev = ActionModel.zeros(K, cfg.normalize_pairs)
    prev_risk = risk(prev, latents)
    history = []
    violations = 0
    for rnd in range(cfg.max_rounds):
        model = _solve_ssvm(data, latents, K, cfg, rng, backend)
        new_risk = risk(model, latents)
        kept = new_risk > prev_risk
        if kept:
            model = ActionModel(prev.w.copy(), K, cfg.normalize_pairs)
        new_latents = [
            complete_latent(model, x, y, h, cfg.max_sweeps, backend)[0]
            for (x, y), h in zip(data, latents)
        ]
        changes = int(sum(np.count_nonzero(a != b) for a, b in zip(new_latents, latents)))
        monitored = risk(model, new_latents)
        if history and monitored > history[-1]["risk"] + cfg.risk_tolerance:
            violations += 1
            logger.warning("round %d: objective rose from %.6f to %.6f",
                           rnd, history[-1]["risk"], monitored)
        history.append({"round": rnd, "risk": monitored, "latent_changes": changes,
                        "kept_previous": bool(kept)})
        logger.info("round %d: objective %.6f, %d latent changes", rnd, monitored, changes)
        latents = new_latents
        prev, prev_risk = model, monitored
        if changes == 0:
            break

    model = prev
    model.metadata = {
        "config": asdict(cfg),
        "fingerprint": _fingerprint(data, cfg),
        "history": history,
        "risk_violations": violations,
        "n_train": len(data),
    }
    return model, latents


def train_lssvm(data, C=None, config=None, backend=None, **overrides):
    """Train and return an :class:`ActionModel`; see :func:`fit_lssvm`."""
    return fit_lssvm(data, C, config, backend, **overrides)[0]


def predict(model, x, max_sweeps=MAX_SWEEPS, backend=None):
    return infer_greedy(model, x, max_sweeps, backend).y
