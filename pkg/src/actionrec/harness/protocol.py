"""One-vs-rest action protocol, score-file I/O and evaluation reports."""

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..segmentation import SegmentationParams
from ..structmodel import TrainConfig, infer_greedy, train_lssvm
from .dataset import subsample_negatives

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("class", "positive_accuracy", "negative_accuracy", "n_positive", "n_negative")
REPORT_SCHEMA = 1


# --- artifacts ------------------------------------------------------------------

def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_scores_csv(path, probs, class_names):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(class_names)
    for row in np.atleast_2d(probs):
        writer.writerow([repr(float(v)) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_scores_csv(path):
    """(T, K) score matrix and the class-name header of a score file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: score file has no rows")
    return np.array(rows[1:], dtype=np.float64), rows[0]


@dataclass
class ProtocolConfig:
    C: float = 1.0
    negatives_per_class: int = 5
    seed: int = 0
    epochs: int = 50
    max_rounds: int = 10
    normalize_pairs: bool = False
    same_label_constraints: bool = True
    jobs: int = 1
    cache_dir: str = None
    detector: str = None
    codebook: str = None
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)

    def train_config(self, seed):
        return TrainConfig(C=self.C, epochs=self.epochs, max_rounds=self.max_rounds, seed=seed,
                           normalize_pairs=self.normalize_pairs,
                           same_label_constraints=self.same_label_constraints)


class MeasurementSource:
    """Resolve a manifest path to its (T, K) superpixel score matrix.

    ``.csv`` paths are read as score files. Images go through segmentation,
    descriptors and the pre-trained detector; results are cached under
    ``cache_dir`` when set. The detector is only ever loaded, never trained.
    """

    def __init__(self, config):
        self.config = config
        self._detector = None
        self._codebook = None

    def _stage(self, name, path, loader):
        if not path:
            raise ConfigurationError(f"stage '{name}': no {name} file configured "
                                     f"(set protocol.{name} or pass --{name})")
        if not Path(path).exists():
            raise ConfigurationError(f"stage '{name}': {path} does not exist")
        return loader(path)

    def _image_scores(self, path):
        from ..descriptors import Codebook, describe_superpixels
        from ..detector import DetectorModel, score_matrix
        from ..imaging import load_ppm
        from ..segmentation import segment

        if self._detector is None:
            self._detector = self._stage("detector", self.config.detector, DetectorModel.load)
        if self._codebook is None:
            self._codebook = self._stage("codebook", self.config.codebook, Codebook.load)
        img = load_ppm(path)
        seg = segment(img, self.config.segmentation)
        return score_matrix(self._detector, describe_superpixels(img, seg, self._codebook))

    def __call__(self, path):
        if str(path).lower().endswith(".csv"):
            return read_scores_csv(path)[0]
        cache = None
        if self.config.cache_dir:
            key = hashlib.sha256(str(Path(path).resolve()).encode()).hexdigest()[:20]
            cache = Path(self.config.cache_dir) / "scores" / f"{key}.csv"
            if cache.exists():
                return read_scores_csv(cache)[0]
        scores = self._image_scores(path)
        if cache is not None:
            write_scores_csv(cache, scores, self._detector.class_names)
        return scores


# --- evaluation -----------------------------------------------------------------

@dataclass
class ClassResult:
    name: str
    positive_accuracy: float
    negative_accuracy: float
    n_positive: int
    n_negative: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def means(self):
        def mean(vals):
            vals = [v for v in vals if not math.isnan(v)]
            return sum(vals) / len(vals) if vals else math.nan
        return (mean([r.positive_accuracy for r in self.rows]),
                mean([r.negative_accuracy for r in self.rows]))


def class_accuracies(y_true, y_pred):
    """Positive accuracy TP/(TP+FN) and negative accuracy TN/(TN+FP); NaN without support."""
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    n_pos = int(y_true.sum())
    n_neg = len(y_true) - n_pos
    tp = int((y_true & y_pred).sum())
    tn = int((~y_true & ~y_pred).sum())
    return (tp / n_pos if n_pos else math.nan, tn / n_neg if n_neg else math.nan, n_pos, n_neg)


def _run_class(args):
    name, train_data, test_x, test_y, cfg = args
    model = train_lssvm(train_data, config=cfg)
    preds = [infer_greedy(model, x).y for x in test_x]
    pos, neg, n_pos, n_neg = class_accuracies(test_y, preds)
    return ClassResult(name, pos, neg, n_pos, n_neg)


def run_protocol(manifest, config=None, measure=None):
    """Train one model per action class and score it on the full test split."""
    config = config or ProtocolConfig()
    measure = measure or MeasurementSource(config)
    memo = {}

    def x_of(entry):
        if entry.path not in memo:
            memo[entry.path] = measure(entry.path)
        return memo[entry.path]

    test = manifest.split("test")
    test_x = [x_of(e) for e in test]
    seeds = np.random.SeedSequence(config.seed).spawn(len(manifest.class_names))
    jobs = []
    for name, ss in zip(manifest.class_names, seeds):
        sub_seed, train_seed = (int(v) for v in ss.generate_state(2))
        chosen = subsample_negatives(manifest, name, config.negatives_per_class, sub_seed)
        train_data = [(x_of(e), int(e.label == name)) for e in chosen]
        test_y = [int(e.label == name) for e in test]
        jobs.append((name, train_data, test_x, test_y, config.train_config(train_seed)))

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_run_class, jobs))
    else:
        rows = [_run_class(j) for j in jobs]
    for r in rows:
        logger.info("%s: positive %.4f negative %.4f", r.name, r.positive_accuracy, r.negative_accuracy)
    return EvalReport(rows)


# --- report output --------------------------------------------------------------

def _fmt(v):
    return "-" if isinstance(v, float) and math.isnan(v) else f"{v:.4f}"


def report_emit(report, path=None, fmt="tsv"):
    """Render ``report`` as TSV or JSON text; also written to ``path`` if given.

    Columns are :data:`REPORT_COLUMNS`; a final ``mean`` row averages the
    per-class accuracies.
    """
    mean_pos, mean_neg = report.means()
    if fmt == "tsv":
        lines = ["\t".join(REPORT_COLUMNS)]
        for r in report.rows:
            lines.append("\t".join([r.name, _fmt(r.positive_accuracy), _fmt(r.negative_accuracy),
                                    str(r.n_positive), str(r.n_negative)]))
        lines.append("\t".join(["mean", _fmt(mean_pos), _fmt(mean_neg), "-", "-"]))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        def num(v):
            return None if math.isnan(v) else round(v, 6)
        doc = {
            "schema_version": REPORT_SCHEMA,
            "kind": "eval_report",
            "columns": list(REPORT_COLUMNS),
            "rows": [{"class": r.name, "positive_accuracy": num(r.positive_accuracy),
                      "negative_accuracy": num(r.negative_accuracy),
                      "n_positive": r.n_positive, "n_negative": r.n_negative} for r in report.rows],
            "means": {"positive_accuracy": num(mean_pos), "negative_accuracy": num(mean_neg)},
        }
        text = json.dumps(doc, indent=1) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        atomic_write_text(path, text)
    return text
