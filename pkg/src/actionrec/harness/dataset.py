"""Dataset manifests: ingestion and per-class negative sub-sampling.

Two on-disk layouts are understood.

``folder``: one sub-directory per action class holding ``.ppm``/``.pgm``
images or ``.csv`` score files. Optional split lists live in
``<root>/splits/<class>_train.txt`` and ``<class>_test.txt`` (one file name
per line). Without them the first ``train_per_class`` files of each class
(lexicographic) are training data and the rest test data.

``manifest``: ``<root>/manifest.json`` of the form::

    {"schema_version": 1,
     "class_names": ["applauding", ...],
     "entries": [{"path": "img/001.ppm", "class": "applauding", "split": "train"}, ...]}

with paths relative to ``root``.
"""

import json
import logging
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CapacityError, ValidationError

logger = logging.getLogger(__name__)

DATA_EXTENSIONS = (".ppm", ".pgm", ".csv")
SPLITS = ("train", "test")
MANIFEST_SCHEMA = 1


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class DatasetManifest:
    entries: list
    class_names: list

    def __post_init__(self):
        known = set(self.class_names)
        seen = set()
        for e in self.entries:
            if e.label not in known:
                raise ValidationError(f"{e.path}: unknown class {e.label!r}")
            if e.split not in SPLITS:
                raise ValidationError(f"{e.path}: split must be train or test, got {e.split!r}")
            if e.path in seen:
                raise ValidationError(f"duplicate path {e.path}")
            seen.add(e.path)
        present = {e.label for e in self.entries}
        missing = [c for c in self.class_names if c not in present]
        if missing:
            raise ValidationError(f"classes without entries: {missing}")

    def by_class(self, split):
        out = {c: [] for c in self.class_names}
        for e in self.entries:
            if e.split == split:
                out[e.label].append(e)
        return out

    def split(self, split):
        return [e for e in self.entries if e.split == split]


def _check_readable(path):
    if not os.access(path, os.R_OK):
        raise OSError(f"cannot read {path}")


def _read_split_list(path):
    return {line.strip() for line in Path(path).read_text().splitlines() if line.strip()}


def _ingest_folders(root, train_per_class, extensions):
    entries, classes = [], []
    split_dir = root / "splits"
    for cdir in sorted(p for p in root.iterdir() if p.is_dir() and p.name != "splits"):
        files = sorted(p for p in cdir.iterdir() if p.is_file() and p.suffix.lower() in extensions)
        if not files:
            warnings.warn(f"class folder {cdir} has no data files; excluded", stacklevel=3)
            continue
        train_list = split_dir / f"{cdir.name}_train.txt"
        test_list = split_dir / f"{cdir.name}_test.txt"
        if train_list.exists() or test_list.exists():
            train = _read_split_list(train_list) if train_list.exists() else set()
            test = _read_split_list(test_list) if test_list.exists() else set()
            assigned = []
            for f in files:
                if f.name in train or f.stem in train:
                    assigned.append((f, "train"))
                elif f.name in test or f.stem in test:
                    assigned.append((f, "test"))
                else:
                    logger.info("%s is in neither split list; skipped", f)
        else:
            assigned = [(f, "train" if i < train_per_class else "test") for i, f in enumerate(files)]
        if not assigned:
            warnings.warn(f"class folder {cdir} has no files in its split lists; excluded", stacklevel=3)
            continue
        classes.append(cdir.name)
        for f, split in assigned:
            _check_readable(f)
            entries.append(ManifestEntry(str(f), cdir.name, split))
    return entries, classes


def _ingest_manifest(root):
    doc = json.loads((root / "manifest.json").read_text())
    if doc.get("schema_version") != MANIFEST_SCHEMA:
        raise ValidationError(f"manifest schema_version must be {MANIFEST_SCHEMA}")
    classes = list(doc["class_names"])
    entries = []
    for raw in doc["entries"]:
        path = root / raw["path"]
        entries.append(ManifestEntry(str(path), raw["class"], raw["split"]))
    present = {e.label for e in entries}
    for c in [c for c in classes if c not in present]:
        warnings.warn(f"class {c!r} has no entries; excluded", stacklevel=3)
    classes = [c for c in classes if c in present]
    # validate before touching the file system so bad tokens surface first
    manifest = DatasetManifest(sorted(entries, key=lambda e: e.path), classes)
    for e in manifest.entries:
        _check_readable(e.path)
    return manifest


def ingest(root, layout="folder", train_per_class=100, extensions=DATA_EXTENSIONS):
    """Build a :class:`DatasetManifest` ordered lexicographically by path."""
    root = Path(root)
    if not root.is_dir():
        raise OSError(f"cannot read dataset directory {root}")
    if layout == "manifest":
        return _ingest_manifest(root)
    if layout != "folder":
        raise ValueError(f"unknown layout {layout!r}")
    entries, classes = _ingest_folders(root, train_per_class, tuple(extensions))
    return DatasetManifest(sorted(entries, key=lambda e: e.path), classes)


def subsample_negatives(manifest, positive_class, per_class, seed):
    """All training positives plus ``per_class`` random training images of every other class."""
    if positive_class not in manifest.class_names:
        raise ValidationError(f"unknown class {positive_class!r}")
    train = manifest.by_class("train")
    negatives = [c for c in manifest.class_names if c != positive_class]
    smallest = min((len(train[c]) for c in negatives), default=0)
    if per_class < 0 or (negatives and per_class > smallest):
        raise CapacityError(
            f"cannot draw {per_class} images per negative class; the smallest has {smallest}")
    rng = np.random.default_rng(seed)
    out = list(train[positive_class])
    for c in negatives:
        picks = np.sort(rng.choice(len(train[c]), size=per_class, replace=False))
        out.extend(train[c][i] for i in picks)
    return out
