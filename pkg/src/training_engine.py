import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple

import numpy as np
from tqdm import tqdm

from .config import OptimizerKind, TrainConfig
from .data import Dataset
from .errors import DivergenceError
from .hybrid import QUANTUM_PARAMETERS, HybridModel, backward, forward, loss

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float
    test_accuracy: Optional[float]
    consumed_sha256: str

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainingResult:
    model: HybridModel
    history: List[EpochRecord]
    best_epoch: int
    consumed_ids: Set[str] = field(default_factory=set)

    @property
    def consumed_sha256(self) -> str:
        return consumed_digest(self.consumed_ids)


def consumed_digest(keys: Set[str]) -> str:
    """SHA-256 over the sorted, newline-joined sample keys"""
    return hashlib.sha256("\n".join(sorted(keys)).encode("utf-8")).hexdigest()


class TrainingEngine:
    """End-to-end mini-batch training of every classical and quantum parameter"""

    def __init__(self, config: TrainConfig):
        self.config = config
        self._velocity: Dict[str, np.ndarray] = {}

    def _map(self, executor: Optional[ThreadPoolExecutor], fn: Callable, items: List) -> List:
        """Results always come back in submission order"""
        if executor is None:
            return [fn(item) for item in items]
        return list(executor.map(fn, items))

    def _learning_rate(self, name: str) -> float:
        return self.config.lr_quantum if name in QUANTUM_PARAMETERS else self.config.lr_classical

    def _sample_pass(self, model: HybridModel, sample: Tuple[np.ndarray, int]) -> Tuple[float, Dict[str, np.ndarray]]:
        image, label = sample
        scores, cache = forward(model, image)
        return loss(scores, label), backward(model, cache, label)

    def _batch_step(
        self, model: HybridModel, dataset: Dataset, batch: np.ndarray, executor: Optional[ThreadPoolExecutor]
    ) -> List[float]:
        samples = [(dataset.images[i], int(dataset.labels[i])) for i in batch]
        results = self._map(executor, lambda s: self._sample_pass(model, s), samples)

        losses = [value for value, _ in results]
        totals = {name: np.zeros_like(value) for name, value in model.parameters().items()}
        for index, (value, grads) in zip(batch, results):
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergenceError(
                    f"Non-finite loss or gradient on sample {dataset.sample_keys([index])[0]} (loss={value})"
                )
            for name, grad in grads.items():
                totals[name] += grad
        self._apply(model, {name: total / len(batch) for name, total in totals.items()})
        return losses

    def _apply(self, model: HybridModel, grads: Dict[str, np.ndarray]) -> None:
        for name, param in model.parameters().items():
            step = grads[name]
            if self.config.optimizer == OptimizerKind.MOMENTUM:
                velocity = self._velocity.setdefault(name, np.zeros_like(param))
                velocity *= self.config.momentum
                velocity += step
                step = velocity
            param -= self._learning_rate(name) * step

    def evaluate(
        self, model: HybridModel, dataset: Dataset, executor: Optional[ThreadPoolExecutor] = None
    ) -> Tuple[float, float]:
        """(accuracy, mean loss) over a dataset"""
        if len(dataset) == 0:
            raise ValueError("Cannot evaluate on an empty dataset")
        samples = list(dataset)
        scores = self._map(executor, lambda s: forward(model, s[0])[0], samples)
        correct = [int(np.argmax(s)) + 1 == label for s, (_, label) in zip(scores, samples)]
        losses = [loss(s, label) for s, (_, label) in zip(scores, samples)]
        return float(np.mean(correct)), float(np.mean(losses))

    def train(
        self,
        model: HybridModel,
        dataset: Dataset,
        validation: Optional[Dataset] = None,
        on_epoch: Optional[Callable[[EpochRecord], None]] = None,
    ) -> TrainingResult:
        """
        Train a copy of `model`; the caller's model is left untouched.

        Returns the parameters of the epoch with the best validation accuracy
        (the final epoch when no validation set is given).
        """
        if len(dataset) == 0:
            raise ValueError("Cannot train on an empty dataset")
        if dataset.num_classes != model.num_classes:
            raise ValueError(f"Dataset has {dataset.num_classes} classes, model predicts {model.num_classes}")

        model = model.copy()
        self._velocity = {}
        rng = np.random.default_rng(self.config.seed)
        consumed: Set[str] = set()
        history: List[EpochRecord] = []
        best_model, best_epoch, best_accuracy = model.copy(), 0, -1.0
        executor = ThreadPoolExecutor(max_workers=self.config.threads) if self.config.threads > 1 else None
        logger.info(
            f"Training on {len(dataset)} samples for {self.config.epochs} epochs "
            f"(batch {self.config.batch_size}, {self.config.optimizer.value}, {self.config.threads} threads)"
        )
        try:
            epochs = tqdm(
                range(1, self.config.epochs + 1),
                desc="Training",
                unit="epoch",
                disable=None if self.config.progress else True,
            )
            for epoch in epochs:
                order = rng.permutation(len(dataset))
                losses: List[float] = []
                for start in range(0, len(order), self.config.batch_size):
                    batch = order[start:start + self.config.batch_size]
                    consumed.update(dataset.sample_keys(batch))
                    losses.extend(self._batch_step(model, dataset, batch, executor))

                train_accuracy, _ = self.evaluate(model, dataset, executor)
                test_accuracy = None
                if validation is not None and len(validation):
                    test_accuracy, _ = self.evaluate(model, validation, executor)
                record = EpochRecord(
                    epoch=epoch,
                    loss=float(np.mean(losses)),
                    train_accuracy=train_accuracy,
                    test_accuracy=test_accuracy,
                    consumed_sha256=consumed_digest(consumed),
                )
                history.append(record)
                logger.info(
                    f"Epoch {epoch}: loss {record.loss:.4f}, train acc {train_accuracy:.3f}"
                    + (f", test acc {test_accuracy:.3f}" if test_accuracy is not None else "")
                )
                if on_epoch is not None:
                    on_epoch(record)

                if test_accuracy is None or test_accuracy > best_accuracy:
                    best_model, best_epoch = model.copy(), epoch
                    best_accuracy = test_accuracy if test_accuracy is not None else best_accuracy
        finally:
            if executor is not None:
                executor.shutdown()

        return TrainingResult(model=best_model, history=history, best_epoch=best_epoch, consumed_ids=consumed)


def train(
    model: HybridModel, dataset: Dataset, config: TrainConfig, validation: Optional[Dataset] = None
) -> TrainingResult:
    return TrainingEngine(config).train(model, dataset, validation)
