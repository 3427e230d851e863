import numpy as np
import orjson
import pytest
from PIL import Image

from main import EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION_FAILED, main


def train_args(out, *extra):
    return [
        "train", "--dataset", "synth-shapes", "--epochs", "1", "--train-count", "8", "--test-count", "4",
        "--qubits", "2", "--blocks", "1", "--batch", "4", "--seed", "7", "--out", str(out), *extra,
    ]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(train_args(out)) == EXIT_OK
    return out


def test_train_writes_checkpoint_and_metrics(trained):
    assert (trained / "model.qgcm").read_bytes()[:4] == b"QGCM"
    lines = [orjson.loads(line) for line in (trained / "metrics.jsonl").read_bytes().splitlines()]
    assert [line["event"] for line in lines] == ["config", "epoch", "done"]
    assert "threads" not in lines[0]["config"]
    assert 0.0 <= lines[1]["train_accuracy"] <= 1.0
    assert lines[2]["best_epoch"] == 1


def test_metrics_do_not_depend_on_thread_count(trained, monkeypatch):
    first = (trained / "metrics.jsonl").read_bytes()
    monkeypatch.setenv("QGCAM_THREADS", "3")
    assert main(train_args(trained)) == EXIT_OK
    assert (trained / "metrics.jsonl").read_bytes() == first


def test_train_requires_a_dataset(tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["train", "--dataset", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) == EXIT_USAGE


def test_explain_writes_heatmap_and_overlay(trained, tmp_path, capsys):
    image = np.zeros((16, 16))
    image[4:10, 4:10] = 1.0
    np.save(tmp_path / "square.npy", image)
    code = main(["explain", "--checkpoint", str(trained / "model.qgcm"), "--input", str(tmp_path / "square.npy"),
                 "--class", "1", "--out", str(tmp_path / "maps")])
    assert code == EXIT_OK
    summary = orjson.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["class"] == 1
    assert (tmp_path / "maps" / "square.class1.heatmap.pgm").exists()
    assert (tmp_path / "maps" / "square.class1.overlay.png").exists()

    code = main(["explain", "--checkpoint", str(trained / "model.qgcm"), "--input", str(tmp_path / "square.npy"),
                 "--grad-path", "analytic", "--out", str(tmp_path / "maps")])
    assert code == EXIT_OK


def test_explain_usage_errors(trained, tmp_path):
    np.save(tmp_path / "x.npy", np.zeros((16, 16)))
    checkpoint = str(trained / "model.qgcm")
    base = ["explain", "--checkpoint", checkpoint, "--input", str(tmp_path / "x.npy"), "--out", str(tmp_path)]
    assert main(base + ["--class", "0"]) == EXIT_USAGE
    assert main(base + ["--class", "3"]) == EXIT_USAGE
    assert main(base + ["--class", "first"]) == EXIT_USAGE

    np.save(tmp_path / "small.npy", np.zeros((8, 8)))
    assert main(["explain", "--checkpoint", checkpoint, "--input", str(tmp_path / "small.npy")]) == EXIT_USAGE

    corrupt = tmp_path / "corrupt.qgcm"
    corrupt.write_bytes((trained / "model.qgcm").read_bytes()[:100])
    assert main(["explain", "--checkpoint", str(corrupt), "--input", str(tmp_path / "x.npy")]) == EXIT_USAGE
    assert main(["explain", "--input", str(tmp_path / "x.npy")]) == EXIT_USAGE


def test_explain_rejects_image_of_wrong_size(trained, tmp_path, capsys):
    Image.fromarray(np.zeros((32, 32), dtype=np.uint8)).save(tmp_path / "large.png")
    code = main(["explain", "--checkpoint", str(trained / "model.qgcm"), "--input", str(tmp_path / "large.png"),
                 "--out", str(tmp_path / "maps")])
    assert code == EXIT_USAGE
    assert "model expects (16, 16)" in capsys.readouterr().err
    assert not (tmp_path / "maps").exists()


def test_gradcheck_exit_codes(tmp_path):
    assert main(["gradcheck", "--trials", "0", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["gradcheck", "--trials", "3", "--blocks", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert not (tmp_path / "gradcheck_worst_case.json").exists()
    code = main(["gradcheck", "--trials", "2", "--shift-override", "1.0", "--out", str(tmp_path)])
    assert code == EXIT_VERIFICATION_FAILED
    worst = orjson.loads((tmp_path / "gradcheck_worst_case.json").read_bytes())
    assert {"x", "theta", "circuit"} <= set(worst)


def test_default_gradcheck_passes(tmp_path):
    assert main(["gradcheck", "--out", str(tmp_path)]) == EXIT_OK


def test_demo_data_is_balanced_and_reproducible(tmp_path, capsys):
    assert main(["demo-data", "--kind", "shapes", "--count", "20", "--seed", "3", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["demo-data", "--kind", "shapes", "--count", "20", "--seed", "3", "--out", str(tmp_path / "b")]) == EXIT_OK
    records = [orjson.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert records[0]["split"] == "train"
    assert records[0]["per_class"] == {"1": 10, "2": 10}
    for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte"):
        assert (tmp_path / "a" / "shapes" / name).read_bytes() == (tmp_path / "b" / "shapes" / name).read_bytes()


def test_demo_data_directory_trains(tmp_path):
    assert main(["demo-data", "--kind", "shapes", "--count", "8", "--out", str(tmp_path)]) == EXIT_OK
    args = ["train", "--dataset", str(tmp_path / "shapes"), "--digits", "0,1", "--epochs", "1",
            "--qubits", "2", "--blocks", "1", "--out", str(tmp_path / "run")]
    assert main(args) == EXIT_OK
    assert (tmp_path / "run" / "model.qgcm").exists()


def test_speech_demo_data_writes_bands(tmp_path):
    assert main(["demo-data", "--kind", "speech", "--count", "4", "--out", str(tmp_path)]) == EXIT_OK
    bands = orjson.loads((tmp_path / "speech" / "train-bands.json").read_bytes())
    assert len(bands) == 4
