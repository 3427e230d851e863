"""
Versioned binary checkpoints.

    b"QGCM" | u32 version | u32 block count | per block: u32 ndim, ndim x u32 dims
    | little-endian float64 payload of every block in declared order
    | u32 length | UTF-8 JSON of the ModelSpec

All integers are little-endian.
"""
import logging
import struct
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .errors import CheckpointFormatError
from .hybrid import HybridModel, ModelSpec

logger = logging.getLogger(__name__)

MAGIC = b"QGCM"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_checkpoint(model: HybridModel) -> bytes:
    params = model.parameters()
    header = [MAGIC, _U32.pack(VERSION), _U32.pack(len(params))]
    for value in params.values():
        header.append(_U32.pack(value.ndim))
        header.extend(_U32.pack(dim) for dim in value.shape)
    payload = [np.ascontiguousarray(value, dtype="<f8").tobytes() for value in params.values()]
    spec = model.spec.model_dump_json().encode("utf-8")
    return b"".join(header + payload + [_U32.pack(len(spec)), spec])


def save_checkpoint(model: HybridModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model))
    logger.info(f"Saved checkpoint to {path}")
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointFormatError(
                f"Checkpoint truncated while reading {what}: need {size} bytes at offset {self.offset}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_checkpoint(data: bytes) -> HybridModel:
    reader = _Reader(data)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointFormatError(f"Bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version = reader.u32("version")
    if version != VERSION:
        raise CheckpointFormatError(f"Checkpoint version {version} not supported. Supported versions: [{VERSION}]")

    shapes: List[Tuple[int, ...]] = []
    for index in range(reader.u32("block count")):
        ndim = reader.u32(f"rank of block {index}")
        shapes.append(tuple(reader.u32(f"dimension of block {index}") for _ in range(ndim)))
    blocks = []
    for index, shape in enumerate(shapes):
        size = int(np.prod(shape, dtype=np.int64)) * 8
        raw = reader.take(size, f"payload of block {index}")
        blocks.append(np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape))

    length = reader.u32("spec length")
    blob = reader.take(length, "model spec")
    if reader.offset != len(data):
        raise CheckpointFormatError(f"{len(data) - reader.offset} trailing bytes after the model spec")
    try:
        spec = ModelSpec.model_validate_json(blob)
    except ValidationError as e:
        raise CheckpointFormatError(f"Invalid model spec in checkpoint: {e}")

    expected = HybridModel.parameter_shapes(spec)
    if [tuple(s) for s in expected.values()] != shapes:
        raise CheckpointFormatError(
            f"Dimension table {shapes} disagrees with the model spec, which needs {list(expected.values())}"
        )
    return HybridModel.from_parameters(spec, dict(zip(expected.keys(), blocks)))


def load_checkpoint(path: Union[str, Path]) -> HybridModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointFormatError(f"Checkpoint not found: {path}")
    model = decode_checkpoint(data)
    logger.info(f"Loaded checkpoint {path} ({model.spec.circuit.n} qubits, {model.num_classes} classes)")
    return model
