from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import orjson
from pydantic import BaseModel, Field, field_validator

from routers.analytic_provider import AnalyticGradientProvider
from routers.base_gradient_provider import BaseGradientProvider
from routers.shift_provider import ShiftGradientProvider


class GradPath(Enum):
    SHIFT = "shift"
    ANALYTIC = "analytic"


class OptimizerKind(Enum):
    SGD = "sgd"
    MOMENTUM = "momentum"


class Command(Enum):
    TRAIN = "train"
    EXPLAIN = "explain"
    GRADCHECK = "gradcheck"
    DEMO_DATA = "demo-data"


class DatasetKind(Enum):
    SHAPES = "shapes"
    SPEECH = "speech"


def get_gradient_provider(path: Union[GradPath, str] = GradPath.SHIFT, **kwargs) -> BaseGradientProvider:
    """Get the input-gradient provider for a gradient path"""
    path = GradPath(path)
    if path == GradPath.SHIFT:
        return ShiftGradientProvider(**kwargs)
    elif path == GradPath.ANALYTIC:
        return AnalyticGradientProvider(**kwargs)
    else:
        raise ValueError(f"Unsupported gradient path: {path}")


class TrainConfig(BaseModel):
    """Optimisation settings for end-to-end training"""
    epochs: int = Field(default=5, ge=1, description="Passes over the training set")
    batch_size: int = Field(default=8, ge=1, description="Samples per update step")
    lr_classical: float = Field(default=0.01, ge=0, description="Learning rate for CNN, projection and readout")
    lr_quantum: float = Field(default=0.05, ge=0, description="Learning rate for the circuit angles")
    optimizer: OptimizerKind = Field(default=OptimizerKind.SGD)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    seed: int = Field(default=42)
    threads: int = Field(default=1, ge=1, description="Worker threads for per-sample passes")
    progress: bool = Field(default=False, description="Show a tqdm progress bar on stderr")


class RunConfig(BaseModel):
    """Effective configuration of one CLI invocation"""
    command: Command
    dataset: Optional[str] = Field(default=None, description="synth-shapes, synth-speech or an IDX directory")
    digits: Optional[List[int]] = Field(default=None, description="Original labels to keep, e.g. [0, 1]")
    train_count: Optional[int] = Field(default=None, ge=2)
    test_count: Optional[int] = Field(default=None, ge=1)
    checkpoint: Optional[str] = None
    input: Optional[str] = None
    class_label: Union[int, str] = Field(default="predicted")
    grad_path: GradPath = Field(default=GradPath.SHIFT)
    qubits: int = Field(default=8, ge=1, le=12)
    blocks: int = Field(default=4, ge=0)
    trials: int = Field(default=50)
    kind: DatasetKind = Field(default=DatasetKind.SHAPES)
    count: int = Field(default=200, ge=2)
    out: str = Field(default="runs")
    seed: int = Field(default=42)
    epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=8, ge=1)
    lr_classical: float = Field(default=0.01, ge=0)
    lr_quantum: float = Field(default=0.05, ge=0)
    optimizer: OptimizerKind = Field(default=OptimizerKind.SGD)
    threads: int = Field(default=1, ge=1)

    @field_validator("class_label", mode="before")
    @classmethod
    def _parse_class(cls, value):
        if isinstance(value, str) and value != "predicted":
            try:
                return int(value)
            except ValueError:
                raise ValueError(f"--class must be an integer or 'predicted', got {value!r}")
        return value

    def get_train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_classical=self.lr_classical,
            lr_quantum=self.lr_quantum,
            optimizer=self.optimizer,
            seed=self.seed,
            threads=self.threads,
            progress=True,
        )

    def get_gradient_provider(self, **kwargs) -> BaseGradientProvider:
        return get_gradient_provider(self.grad_path, **kwargs)


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON config file; keys use the RunConfig field names"""
    try:
        data = orjson.loads(Path(path).read_bytes())
    except FileNotFoundError:
        raise ValueError(f"--config: file not found: {path}")
    except orjson.JSONDecodeError as e:
        raise ValueError(f"--config: {path} is not valid JSON ({e})")
    if not isinstance(data, dict):
        raise ValueError(f"--config: {path} must hold a JSON object")
    return data


def resolve_run_config(command: str, flags: Dict[str, Any], config_path: Optional[str] = None) -> RunConfig:
    """Flags override the config file, which overrides the built-in defaults"""
    merged: Dict[str, Any] = {}
    if config_path:
        merged.update(load_config_file(config_path))
    merged.update({key: value for key, value in flags.items() if value is not None})
    merged["command"] = command
    return RunConfig(**merged)
