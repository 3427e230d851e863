import io
from pathlib import Path

import numpy as np
import orjson
import pytest
from pydantic import ValidationError

from routers.analytic_provider import AnalyticGradientProvider
from routers.shift_provider import ShiftGradientProvider
from src.config import (
    Command,
    GradPath,
    OptimizerKind,
    RunConfig,
    get_gradient_provider,
    load_config_file,
    resolve_run_config,
)
from src.vqc import default_circuit
from utils.utils import JsonLinesWriter, dumps_line, get_thread_count

DEFAULTS = Path(__file__).resolve().parent.parent / "templates" / "default_config.json"


def write_json(path, data):
    path.write_bytes(orjson.dumps(data))
    return str(path)


def test_flags_override_file_which_overrides_defaults(tmp_path):
    path = write_json(tmp_path / "run.json", {"epochs": 3, "lr_quantum": 0.2, "optimizer": "momentum"})
    config = resolve_run_config("train", {"epochs": 7, "seed": None}, path)
    assert config.command == Command.TRAIN
    assert config.epochs == 7
    assert config.lr_quantum == 0.2
    assert config.optimizer == OptimizerKind.MOMENTUM
    assert config.seed == 42
    assert config.batch_size == 8


def test_shipped_defaults_file_is_valid():
    config = resolve_run_config("train", {}, str(DEFAULTS))
    assert config.dataset == "synth-shapes"
    assert config.grad_path == GradPath.SHIFT


def test_bad_config_files(tmp_path):
    (tmp_path / "broken.json").write_bytes(b"{epochs: 3")
    with pytest.raises(ValueError, match="--config"):
        load_config_file(tmp_path / "broken.json")
    with pytest.raises(ValueError, match="JSON object"):
        load_config_file(write_json(tmp_path / "list.json", [1, 2]))
    with pytest.raises(ValueError, match="not found"):
        load_config_file(tmp_path / "absent.json")
    with pytest.raises(ValidationError):
        resolve_run_config("train", {}, write_json(tmp_path / "neg.json", {"epochs": 0}))


def test_class_label_parsing():
    assert RunConfig(command="explain").class_label == "predicted"
    assert RunConfig(command="explain", class_label="2").class_label == 2
    with pytest.raises(ValidationError):
        RunConfig(command="explain", class_label="two")


def test_train_config_mirrors_run_config():
    train = RunConfig(command="train", epochs=3, batch_size=2, lr_quantum=0.1, threads=4).get_train_config()
    assert (train.epochs, train.batch_size, train.lr_quantum, train.threads) == (3, 2, 0.1, 4)


def test_gradient_providers():
    assert isinstance(get_gradient_provider("shift"), ShiftGradientProvider)
    assert isinstance(get_gradient_provider(GradPath.ANALYTIC), AnalyticGradientProvider)
    assert isinstance(RunConfig(command="explain", grad_path="analytic").get_gradient_provider(), AnalyticGradientProvider)
    assert get_gradient_provider("shift", shift=1.0).provider_info["shift"] == 1.0
    assert AnalyticGradientProvider.list_supported_paths() == ["analytic"]
    with pytest.raises(ValueError):
        get_gradient_provider("backprop")


def test_provider_qubit_limits():
    circuit = default_circuit(n=9, blocks=1, m=2)
    with pytest.raises(ValueError, match="at most 8"):
        AnalyticGradientProvider().input_jacobian(np.zeros(9), np.zeros((1, 9)), circuit)
    jacobian = ShiftGradientProvider().input_jacobian(np.zeros(9), np.zeros((1, 9)), circuit)
    assert jacobian.shape == (2, 9)


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.delenv("QGCAM_THREADS", raising=False)
    assert get_thread_count() == 1
    monkeypatch.setenv("QGCAM_THREADS", "3")
    assert get_thread_count() == 3
    for bad in ("0", "many"):
        monkeypatch.setenv("QGCAM_THREADS", bad)
        with pytest.raises(ValueError):
            get_thread_count()


def test_json_lines_are_sorted_and_echoed(tmp_path):
    echo = io.BytesIO()
    with JsonLinesWriter(tmp_path / "log" / "m.jsonl", echo=echo) as writer:
        writer.write({"b": 1, "a": np.float64(0.5)})
    assert (tmp_path / "log" / "m.jsonl").read_bytes() == b'{"a":0.5,"b":1}\n'
    assert echo.getvalue() == dumps_line({"a": 0.5, "b": 1})
