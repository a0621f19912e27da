"""Command-line interface: ``actionrec <stage> ...``."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import load_config, section
from .errors import ActionRecError, ValidationError

logger = logging.getLogger("actionrec")


def _pick(args, cfg, name, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _seed(args, cfg):
    return int(_pick(args, cfg, "seed", args.global_seed if args.global_seed is not None else 0))


def _write_matrix_csv(path, header, rows):
    from .harness.protocol import atomic_write_text
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_matrix_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=np.float64).reshape(len(rows) - 1, len(rows[0]))


# --- subcommands ------------------------------------------------------------------

def cmd_segment(args, config):
    from .imaging import load_ppm
    from .segmentation import SegmentationParams, save_labels, segment

    cfg = section(config, "segmentation")
    params = SegmentationParams(
        sigma=float(_pick(args, cfg, "sigma", 0.8)),
        k=float(_pick(args, cfg, "k", 300.0)),
        min_size=int(_pick(args, cfg, "min_size", 100)),
    )
    seg = segment(load_ppm(args.input), params)
    save_labels(args.out, seg)
    print(f"{seg.n_segments} superpixels -> {args.out}")


def cmd_codebook_train(args, config):
    from .descriptors import VOCAB_SIZE, dense_descriptor_array, train_codebook
    from .imaging import load_ppm

    cfg = section(config, "codebook")
    seed = _seed(args, cfg)
    size = int(_pick(args, cfg, "size", VOCAB_SIZE))
    cap = int(_pick(args, cfg, "max_descriptors", 200_000))
    paths = sorted(p for p in Path(args.images).rglob("*") if p.suffix.lower() in (".ppm", ".pgm"))
    if not paths:
        raise ValidationError(f"no .ppm/.pgm images under {args.images}")
    blocks = [dense_descriptor_array(load_ppm(p)).nonzero().values for p in paths]
    X = np.concatenate(blocks)
    if len(X) > cap:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(len(X), cap, replace=False))]
    book = train_codebook(X, seed=seed, k=size)
    book.save(args.out)
    print(f"codebook of {book.size} words from {len(X)} descriptors ({len(paths)} images) -> {args.out}")


def cmd_features_extract(args, config):
    from .descriptors import Codebook, describe_superpixels, feature_names
    from .imaging import load_ppm
    from .segmentation import load_labels

    book = Codebook.load(args.codebook)
    feats = describe_superpixels(load_ppm(args.image), load_labels(args.seg), book)
    names = feature_names()[:51] + [f"bof_{i:03d}" for i in range(book.size)]
    _write_matrix_csv(args.out, names, feats)
    print(f"{len(feats)} superpixels x {feats.shape[1]} features -> {args.out}")


def _read_labels(path, class_file):
    from .detector import MSRC_CLASSES

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and not rows[0][0].lstrip("-").isdigit():
        header = rows[0][0].strip().lower()
        if header in ("class", "label"):
            rows = rows[1:]
    tokens = [r[0].strip() for r in rows]
    if class_file:
        names = [line.strip() for line in Path(class_file).read_text().splitlines() if line.strip()]
    elif all(t.lstrip("-").isdigit() for t in tokens):
        names = None
    elif set(tokens) <= set(MSRC_CLASSES):
        names = list(MSRC_CLASSES)
    else:
        names = sorted(set(tokens))
    if names is None:
        return np.array([int(t) for t in tokens]), None
    index = {n: i for i, n in enumerate(names)}
    unknown = sorted(set(t for t in tokens if t not in index and not t.isdigit()))
    if unknown:
        raise ValidationError(f"labels not in the class list: {unknown}")
    return np.array([index[t] if t in index else int(t) for t in tokens]), names


def cmd_detector_train(args, config):
    from .detector import train_multiclass

    cfg = section(config, "detector")
    X = np.concatenate([_read_matrix_csv(p)[1] for p in args.features])
    y, names = _read_labels(args.labels, _pick(args, cfg, "classes", None))
    if len(y) != len(X):
        raise ValidationError(f"{len(X)} feature rows but {len(y)} labels")
    model = train_multiclass(
        X, y, C=float(_pick(args, cfg, "C", 1.0)), seed=_seed(args, cfg),
        epochs=int(_pick(args, cfg, "epochs", 100)), class_names=names,
        append_bias=bool(_pick(args, cfg, "append_bias", False)),
    )
    model.save(args.out)
    print(f"detector over {model.n_classes} classes, objective {model.metadata['objective']:.4f} -> {args.out}")


def cmd_detector_score(args, config):
    from .detector import DetectorModel, score_matrix
    from .harness.protocol import write_scores_csv

    model = DetectorModel.load(args.model)
    _, X = _read_matrix_csv(args.features)
    probs = score_matrix(model, X)
    write_scores_csv(args.out, probs, model.class_names)
    print(f"{len(probs)} score vectors -> {args.out}")


def _action_config(args, config):
    from .structmodel import TrainConfig

    cfg = section(config, "action")
    return TrainConfig(
        C=float(_pick(args, cfg, "C", 1.0)),
        epochs=int(_pick(args, cfg, "epochs", 50)),
        max_rounds=int(_pick(args, cfg, "max_rounds", 10)),
        seed=_seed(args, cfg),
        normalize_pairs=bool(_pick(args, cfg, "normalize_pairs", False)),
    )


def cmd_action_train(args, config):
    from .harness.protocol import read_scores_csv
    from .structmodel import train_lssvm

    with open(args.labels, newline="") as fh:
        labels = {row["image"]: int(row["label"]) for row in csv.DictReader(fh)}
    data = []
    for name in sorted(labels):
        path = Path(args.scores) / (name if name.endswith(".csv") else f"{name}.csv")
        data.append((read_scores_csv(path)[0], labels[name]))
    model = train_lssvm(data, config=_action_config(args, config))
    model.save(args.out)
    final = model.metadata["history"][-1]
    print(f"trained on {len(data)} examples, objective {final['risk']:.4f} -> {args.out}")


def cmd_action_infer(args, config):
    from .harness.protocol import read_scores_csv
    from .structmodel import ActionModel, infer_greedy

    model = ActionModel.load(args.model)
    x, _ = read_scores_csv(args.scores)
    pred = infer_greedy(model, x)
    print(json.dumps({"y": pred.y, "h": [int(v) for v in pred.h], "score": pred.score}))


def cmd_protocol(args, config):
    from .harness.dataset import ingest
    from .harness.protocol import ProtocolConfig, report_emit, run_protocol
    from .segmentation import SegmentationParams

    cfg = section(config, "protocol")
    seg = section(config, "segmentation")
    pcfg = ProtocolConfig(
        C=float(_pick(args, cfg, "C", 1.0)),
        negatives_per_class=int(_pick(args, cfg, "negatives_per_class", 5)),
        seed=_seed(args, cfg),
        epochs=int(_pick(args, cfg, "epochs", 50)),
        max_rounds=int(_pick(args, cfg, "max_rounds", 10)),
        normalize_pairs=bool(_pick(args, cfg, "normalize_pairs", False)),
        jobs=int(args.jobs or cfg.get("jobs", 1)),
        cache_dir=_pick(args, cfg, "cache", None),
        detector=_pick(args, cfg, "detector", None),
        codebook=_pick(args, cfg, "codebook", None),
        segmentation=SegmentationParams(**seg),
    )
    manifest = ingest(args.root, layout=_pick(args, cfg, "layout", "folder"),
                      train_per_class=int(_pick(args, cfg, "train_per_class", 100)))
    report = run_protocol(manifest, pcfg)
    text = report_emit(report, args.out, fmt=_pick(args, cfg, "format", "tsv"))
    if args.out is None:
        sys.stdout.write(text)


def cmd_synth(args, config):
    from .harness.protocol import atomic_write_text, write_scores_csv
    from .harness.synth import synth_generate

    cfg = section(config, "synth")
    K = int(_pick(args, cfg, "K", 5))
    data, truth = synth_generate(
        K=K,
        T_range=(int(_pick(args, cfg, "t_min", 3)), int(_pick(args, cfg, "t_max", 8))),
        N=int(_pick(args, cfg, "n", 200)),
        rule=_pick(args, cfg, "rule", None),
        noise=float(_pick(args, cfg, "noise", 0.0)),
        seed=_seed(args, cfg),
    )
    out = Path(args.out)
    names = [f"state{k + 1}" for k in range(K)]
    label_lines = ["image,label"]
    truth_lines = ["image,states"]
    for i, ((x, y), h) in enumerate(zip(data, truth)):
        stem = f"ex{i:05d}"
        write_scores_csv(out / "scores" / f"{stem}.csv", x, names)
        label_lines.append(f"{stem},{y}")
        truth_lines.append(f"{stem},{' '.join(str(int(s)) for s in h)}")
    atomic_write_text(out / "labels.csv", "\n".join(label_lines) + "\n")
    atomic_write_text(out / "latent_truth.csv", "\n".join(truth_lines) + "\n")
    n_pos = sum(y for _, y in data)
    print(f"{len(data)} examples ({n_pos} positive) -> {out}")


# --- parser -----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="actionrec", description=__doc__)
    p.add_argument("--config", help="TOML or JSON config file (or inline text)")
    p.add_argument("--seed", dest="global_seed", type=int, help="default seed for every stage")
    p.add_argument("--jobs", type=int, default=None, help="parallel per-class training jobs")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("segment", help="over-segment a PPM image into superpixels")
    s.add_argument("--input", required=True)
    s.add_argument("--sigma", type=float)
    s.add_argument("--k", type=float)
    s.add_argument("--min-size", dest="min_size", type=int)
    s.add_argument("--out", required=True, help="label map (PGM, 16-bit when T > 255)")
    s.set_defaults(func=cmd_segment)

    cb = sub.add_parser("codebook", help="visual vocabulary").add_subparsers(dest="action", required=True)
    s = cb.add_parser("train", help="k-means over dense descriptors of a folder of images")
    s.add_argument("--images", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--size", type=int, help="number of visual words (default 400)")
    s.add_argument("--max-descriptors", dest="max_descriptors", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_codebook_train)

    fe = sub.add_parser("features", help="superpixel descriptors").add_subparsers(dest="action", required=True)
    s = fe.add_parser("extract", help="451-D descriptor per superpixel")
    s.add_argument("--image", required=True)
    s.add_argument("--seg", required=True)
    s.add_argument("--codebook", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features_extract)

    de = sub.add_parser("detector", help="multiclass superpixel detector").add_subparsers(
        dest="action", required=True)
    s = de.add_parser("train")
    s.add_argument("--features", required=True, nargs="+")
    s.add_argument("--labels", required=True, help="CSV with one class name or id per feature row")
    s.add_argument("--classes", help="file with one class name per line (fixes the class order)")
    s.add_argument("--C", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_detector_train)
    s = de.add_parser("score")
    s.add_argument("--features", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_detector_score)

    ac = sub.add_parser("action", help="latent structural SVM").add_subparsers(dest="action", required=True)
    s = ac.add_parser("train")
    s.add_argument("--scores", required=True, help="directory of per-image score CSVs")
    s.add_argument("--labels", required=True, help="CSV with columns image,label")
    s.add_argument("--C", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--max-rounds", dest="max_rounds", type=int)
    s.add_argument("--normalize-pairs", dest="normalize_pairs", action="store_true", default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_action_train)
    s = ac.add_parser("infer")
    s.add_argument("--scores", required=True)
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_action_infer)

    s = sub.add_parser("protocol", help="one-vs-rest training and per-class accuracy report")
    s.add_argument("--root", required=True)
    s.add_argument("--layout", choices=["folder", "manifest"])
    s.add_argument("--train-per-class", dest="train_per_class", type=int)
    s.add_argument("--negatives-per-class", dest="negatives_per_class", type=int)
    s.add_argument("--C", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--max-rounds", dest="max_rounds", type=int)
    s.add_argument("--detector")
    s.add_argument("--codebook")
    s.add_argument("--cache")
    s.add_argument("--format", choices=["tsv", "json"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_protocol)

    s = sub.add_parser("synth", help="write a synthetic score corpus")
    s.add_argument("--K", type=int)
    s.add_argument("--t-min", dest="t_min", type=int)
    s.add_argument("--t-max", dest="t_max", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--noise", type=float)
    s.add_argument("--rule", help="'any:<state>' (1-based); default any:K")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        args.func(args, config)
    except (ActionRecError, OSError, ValueError) as exc:
        print(f"actionrec: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
