import json

import numpy as np
import pytest

from actionrec.cli import main
from actionrec.imaging import ImageBuffer, save_ppm


@pytest.fixture
def images(tmp_path):
    rng = np.random.default_rng(0)
    folder = tmp_path / "imgs"
    folder.mkdir()
    for i in range(2):
        a = np.zeros((48, 64, 3))
        a[:, :32] = [0.9, 0.1, 0.1]
        a[:, 32:] = [0.1, 0.2, 0.9]
        save_ppm(folder / f"im{i}.ppm", ImageBuffer(np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)))
    return folder


def test_image_pipeline(tmp_path, images, capsys):
    img = str(images / "im0.ppm")
    seg, book, feats = tmp_path / "s.pgm", tmp_path / "cb.json", tmp_path / "f.csv"
    assert main(["segment", "--input", img, "--out", str(seg)]) == 0
    assert main(["--seed", "2", "codebook", "train", "--images", str(images), "--size", "10",
                 "--out", str(book)]) == 0
    assert json.loads(book.read_text())["seed"] == 2
    assert main(["features", "extract", "--image", img, "--seg", str(seg), "--codebook", str(book),
                 "--out", str(feats)]) == 0
    header = feats.read_text().splitlines()[0].split(",")
    assert len(header) == 61 and header[0] == "R_mean" and header[-1] == "bof_009"
    labels = tmp_path / "labels.csv"
    labels.write_text("class\ngrass\ncow\n")
    det, scores = tmp_path / "det.json", tmp_path / "scores.csv"
    assert main(["detector", "train", "--features", str(feats), "--labels", str(labels),
                 "--C", "1", "--seed", "0", "--out", str(det)]) == 0
    assert main(["detector", "score", "--features", str(feats), "--model", str(det),
                 "--out", str(scores)]) == 0
    rows = scores.read_text().splitlines()
    assert len(rows) == 3 and len(rows[0].split(",")) == 23
    probs = np.array([r.split(",") for r in rows[1:]], dtype=float)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_synth_train_infer(tmp_path, capsys):
    out = tmp_path / "syn"
    assert main(["synth", "--K", "3", "--t-min", "2", "--t-max", "4", "--n", "30",
                 "--seed", "1", "--out", str(out)]) == 0
    assert len(list((out / "scores").glob("*.csv"))) == 30
    model = tmp_path / "am.json"
    assert main(["action", "train", "--scores", str(out / "scores"), "--labels",
                 str(out / "labels.csv"), "--C", "1", "--seed", "0", "--out", str(model)]) == 0
    capsys.readouterr()
    assert main(["action", "infer", "--scores", str(out / "scores" / "ex00000.csv"),
                 "--model", str(model)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["y"] in (0, 1) and len(result["h"]) >= 2


def test_protocol_command(tmp_path, capsys):
    from test_harness import write_score_tree
    root = write_score_tree(tmp_path / "data", per_class=6)
    cfg = '{"protocol": {"epochs": 5, "max_rounds": 2}}'
    report = tmp_path / "r.tsv"
    assert main(["--config", cfg, "protocol", "--root", str(root), "--train-per-class", "4",
                 "--negatives-per-class", "2", "--out", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0].startswith("class\t") and lines[-1].startswith("mean\t") and len(lines) == 4


def test_errors_are_reported(tmp_path, capsys):
    assert main(["segment", "--input", str(tmp_path / "none.ppm"), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["--config", "schema_version = 9", "synth", "--out", str(tmp_path)]) == 1
