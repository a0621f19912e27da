import json
import math
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actionrec.config import load_config, parse_config, section
from actionrec.errors import CapacityError, ConfigurationError, ValidationError
from actionrec.harness import (
    ClassResult, DatasetManifest, EvalReport, ManifestEntry, ProtocolConfig, class_accuracies,
    ingest, read_scores_csv, report_emit, run_protocol, subsample_negatives, synth_generate,
    write_scores_csv,
)
from actionrec.structmodel import ActionModel, infer_exact


def mock_manifest(n_classes=40, n_train=100, n_test=0):
    entries = []
    names = [f"c{i:02d}" for i in range(n_classes)]
    for c in names:
        entries += [ManifestEntry(f"{c}/tr{j:03d}", c, "train") for j in range(n_train)]
        entries += [ManifestEntry(f"{c}/te{j:03d}", c, "test") for j in range(n_test)]
    return DatasetManifest(entries, names)


def write_score_tree(root, per_class=6, classes=("jumping", "reading"), seed=0):
    """Folder layout of csv score files drawn from the synthetic generator."""
    data, _ = synth_generate(K=4, T_range=(2, 5), N=per_class * len(classes) * 2, seed=seed)
    pos = iter([x for x, y in data if y == 1])
    neg = iter([x for x, y in data if y == 0])
    for i, c in enumerate(classes):
        src = pos if i == 0 else neg
        for j in range(per_class):
            write_scores_csv(root / c / f"{j:03d}.csv", next(src), [f"s{k}" for k in range(4)])
    return root


# --- ingest --------------------------------------------------------------------------

def test_ingest_two_folders(tmp_path):
    for c in ("b_cls", "a_cls"):
        for j in range(3):
            (tmp_path / c).mkdir(exist_ok=True)
            (tmp_path / c / f"{j}.ppm").write_bytes(b"P6 1 1 255\n\x00\x00\x00")
    m = ingest(tmp_path, train_per_class=2)
    assert len(m.entries) == 6 and m.class_names == ["a_cls", "b_cls"]
    assert [e.path for e in m.entries] == sorted(e.path for e in m.entries)
    assert [e.split for e in m.entries[:3]] == ["train", "train", "test"]


def test_ingest_split_files(tmp_path):
    (tmp_path / "walk").mkdir()
    for j in range(4):
        (tmp_path / "walk" / f"{j}.csv").write_text("a\n1\n")
    (tmp_path / "splits").mkdir()
    (tmp_path / "splits" / "walk_train.txt").write_text("3.csv\n")
    (tmp_path / "splits" / "walk_test.txt").write_text("0\n1.csv\n")
    m = ingest(tmp_path)
    assert {(e.path.rsplit("/", 1)[1], e.split) for e in m.entries} == {
        ("3.csv", "train"), ("0.csv", "test"), ("1.csv", "test")}


def test_ingest_empty_folder_warns(tmp_path):
    (tmp_path / "empty").mkdir()
    (tmp_path / "full").mkdir()
    (tmp_path / "full" / "x.csv").write_text("a\n1\n")
    with pytest.warns(UserWarning, match="empty"):
        m = ingest(tmp_path)
    assert m.class_names == ["full"]


def _manifest(tmp_path, entries, classes):
    (tmp_path / "manifest.json").write_text(json.dumps(
        {"schema_version": 1, "class_names": classes, "entries": entries}))


def test_manifest_layout(tmp_path):
    (tmp_path / "a.csv").write_text("s\n1\n")
    (tmp_path / "b.csv").write_text("s\n1\n")
    _manifest(tmp_path, [{"path": "b.csv", "class": "run", "split": "test"},
                         {"path": "a.csv", "class": "run", "split": "train"}], ["run"])
    m = ingest(tmp_path, layout="manifest")
    assert [e.split for e in m.entries] == ["train", "test"]


@pytest.mark.filterwarnings("ignore:class 'run' has no entries")
def test_manifest_unknown_class(tmp_path):
    (tmp_path / "a.csv").write_text("s\n1\n")
    _manifest(tmp_path, [{"path": "a.csv", "class": "fly", "split": "train"}], ["run"])
    with pytest.raises(ValidationError, match="unknown class"):
        ingest(tmp_path, layout="manifest")


def test_manifest_repeated_path(tmp_path):
    (tmp_path / "a.csv").write_text("s\n1\n")
    e = {"path": "a.csv", "class": "run", "split": "train"}
    _manifest(tmp_path, [e, e], ["run"])
    with pytest.raises(ValidationError, match="duplicate"):
        ingest(tmp_path, layout="manifest")


def test_manifest_missing_file(tmp_path):
    _manifest(tmp_path, [{"path": "gone.csv", "class": "run", "split": "train"}], ["run"])
    with pytest.raises(OSError, match="gone.csv"):
        ingest(tmp_path, layout="manifest")


def test_ingest_missing_root(tmp_path):
    with pytest.raises(OSError):
        ingest(tmp_path / "nope")


# --- sub-sampling --------------------------------------------------------------------

def test_subsample_counts_40x100():
    m = mock_manifest()
    for name in m.class_names[:5]:
        chosen = subsample_negatives(m, name, 5, seed=0)
        pos = [e for e in chosen if e.label == name]
        assert len(pos) == 100 and len(chosen) - len(pos) == 195
        assert len({e.path for e in chosen}) == len(chosen)
        counts = {}
        for e in chosen:
            counts[e.label] = counts.get(e.label, 0) + 1
        assert all(v == 5 for k, v in counts.items() if k != name)


def test_subsample_zero_and_determinism():
    m = mock_manifest(5, 10)
    assert all(e.label == "c00" for e in subsample_negatives(m, "c00", 0, 1))
    assert subsample_negatives(m, "c01", 3, 9) == subsample_negatives(m, "c01", 3, 9)
    assert subsample_negatives(m, "c01", 3, 9) != subsample_negatives(m, "c01", 3, 10)


def test_subsample_capacity():
    with pytest.raises(CapacityError):
        subsample_negatives(mock_manifest(3, 4), "c00", 5, 0)
    with pytest.raises(ValidationError):
        subsample_negatives(mock_manifest(3, 4), "nope", 1, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(0, 6))
def test_subsample_never_picks_positives_twice(seed, per_class):
    m = mock_manifest(4, 6, 2)
    chosen = subsample_negatives(m, "c02", per_class, seed)
    assert len({e.path for e in chosen}) == len(chosen)
    assert all(e.split == "train" for e in chosen)
    assert sum(e.label == "c02" for e in chosen) == 6


# --- evaluation -----------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=0, max_size=40))
def test_accuracy_recount(pairs):
    y_true = [a for a, _ in pairs]
    y_pred = [b for _, b in pairs]
    pos, neg, n_pos, n_neg = class_accuracies(y_true, y_pred)
    conf = np.zeros((2, 2), dtype=int)
    for a, b in pairs:
        conf[int(a), int(b)] += 1
    assert (n_pos, n_neg) == (conf[1].sum(), conf[0].sum())
    if n_pos:
        assert pos == conf[1, 1] / (conf[1, 1] + conf[1, 0])
    else:
        assert math.isnan(pos)
    if n_neg:
        assert neg == conf[0, 0] / (conf[0, 0] + conf[0, 1])
    else:
        assert math.isnan(neg)


def test_report_empty():
    text = report_emit(EvalReport())
    assert text == "class\tpositive_accuracy\tnegative_accuracy\tn_positive\tn_negative\nmean\t-\t-\t-\t-\n"


def test_report_single_class(tmp_path):
    rep = EvalReport([ClassResult("rowing a boat", 1.0, 1.0, 1, 1)])
    text = report_emit(rep, tmp_path / "r.tsv")
    assert "rowing a boat\t1.0000\t1.0000\t1\t1" in text
    assert (tmp_path / "r.tsv").read_text() == text


def test_report_means_and_json():
    rows = [ClassResult("a", 0.5, 1.0, 2, 4), ClassResult("b", 0.25, math.nan, 4, 0),
            ClassResult("c", 1.0, 0.5, 1, 2)]
    text = report_emit(EvalReport(rows))
    assert text.splitlines()[-1] == "mean\t0.5833\t0.7500\t-\t-"
    assert "b\t0.2500\t-\t4\t0" in text
    doc = json.loads(report_emit(EvalReport(rows), fmt="json"))
    assert doc["schema_version"] == 1
    assert doc["means"]["positive_accuracy"] == pytest.approx(1.75 / 3, abs=1e-6)
    assert doc["rows"][1]["negative_accuracy"] is None
    with pytest.raises(ValueError):
        report_emit(EvalReport(rows), fmt="xml")


# --- protocol --------------------------------------------------------------------------

def test_scores_csv_roundtrip(tmp_path):
    x = np.random.default_rng(0).dirichlet(np.ones(3), size=4)
    write_scores_csv(tmp_path / "s.csv", x, ["a", "b", "c"])
    back, header = read_scores_csv(tmp_path / "s.csv")
    np.testing.assert_array_equal(back, x)
    assert header == ["a", "b", "c"]
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


def test_protocol_on_score_files(tmp_path):
    root = write_score_tree(tmp_path / "data", per_class=8)
    m = ingest(root, train_per_class=5)
    cfg = ProtocolConfig(negatives_per_class=3, seed=4, epochs=10, max_rounds=3)
    rep = run_protocol(m, cfg)
    assert [r.name for r in rep.rows] == ["jumping", "reading"]
    for r in rep.rows:
        assert (r.n_positive, r.n_negative) == (3, 3)
        assert 0 <= r.positive_accuracy <= 1 and 0 <= r.negative_accuracy <= 1
    again = run_protocol(m, cfg)
    assert report_emit(rep) == report_emit(again)
    parallel = run_protocol(m, ProtocolConfig(negatives_per_class=3, seed=4, epochs=10,
                                              max_rounds=3, jobs=2))
    assert report_emit(parallel) == report_emit(rep)


def test_protocol_single_test_image(tmp_path):
    root = write_score_tree(tmp_path / "data", per_class=4)
    m = ingest(root, train_per_class=3)
    rep = run_protocol(m, ProtocolConfig(negatives_per_class=2, epochs=5, max_rounds=2))
    for r in rep.rows:
        assert r.n_positive == 1 and r.positive_accuracy in (0.0, 1.0)


def test_protocol_names_missing_stage(tmp_path):
    for c in ("a", "b"):
        (tmp_path / c).mkdir()
        for j in range(2):
            (tmp_path / c / f"{j}.ppm").write_bytes(b"P6 1 1 255\n\x00\x00\x00")
    m = ingest(tmp_path, train_per_class=1)
    with pytest.raises(ConfigurationError, match="detector"):
        run_protocol(m, ProtocolConfig(negatives_per_class=1))


# --- synthetic data --------------------------------------------------------------------

def test_synth_small_recount():
    data, truth = synth_generate(K=2, T_range=(2, 4), N=4, seed=11)
    assert len(data) == len(truth) == 4
    assert [y for _, y in data] == [int(np.any(h == 1)) for h in truth]


def test_synth_deterministic_and_simplex():
    a, ta = synth_generate(N=50, noise=0.1, seed=5)
    b, tb = synth_generate(N=50, noise=0.1, seed=5)
    for (xa, ya), (xb, yb), ha, hb in zip(a, b, ta, tb):
        np.testing.assert_array_equal(xa, xb)
        assert ya == yb and np.array_equal(ha, hb)
        assert np.all(xa > 0) and np.all(xa < 1)
        np.testing.assert_allclose(xa.sum(axis=1), 1.0, atol=1e-12)
        assert 3 <= len(xa) <= 8


def test_synth_noiseless_separable_by_hand_model():
    K = 5
    data, _ = synth_generate(K=K, T_range=(3, 6), N=100, noise=0.0, seed=2)
    klass = np.zeros((2, K))
    klass[1, K - 1], klass[0, K - 1] = 2.0, -2.0
    model = ActionModel.from_blocks(np.eye(K) * 10.0, np.zeros((K, K)), klass)
    for x, y in data[:30]:
        assert infer_exact(model, x).y == y


def test_synth_rules_and_errors():
    data, truth = synth_generate(K=3, N=30, rule="any:1", seed=0)
    assert [y for _, y in data] == [int(np.any(h == 0)) for h in truth]
    with pytest.raises(ValidationError):
        synth_generate(K=3, T_range=(40, 40), N=10, seed=0)  # always true
    with pytest.raises(ValidationError):
        synth_generate(K=1)
    with pytest.raises(ValidationError):
        synth_generate(noise=0.5)
    with pytest.raises(ValidationError):
        synth_generate(rule="all:2")


# --- config ----------------------------------------------------------------------------

def test_config_toml_and_json(tmp_path):
    toml = 'schema_version = 1\n[protocol]\nC = 2.0\nnegatives-per-class = 3\n'
    assert section(parse_config(toml), "protocol") == {"C": 2.0, "negatives_per_class": 3}
    (tmp_path / "c.json").write_text('{"segmentation": {"k": 100}}')
    assert section(load_config(str(tmp_path / "c.json")), "segmentation") == {"k": 100}
    assert load_config(None) == {}
    with pytest.raises(ConfigurationError):
        parse_config("schema_version = 2")
    with pytest.raises(ConfigurationError):
        parse_config("[[[")
