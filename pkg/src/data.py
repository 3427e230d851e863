"""
Datasets for the hybrid classifier: MNIST IDX files, synthetic shape images
and a synthetic clean-vs-noisy speech task rendered as spectrogram images.

Images are (height, width) float64 arrays in [0, 1]; labels are 1-based.
"""
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, lfilter

from .errors import DatasetFormatError, ShapeMismatchError
from .imaging import bilinear_resize, read_grayscale

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SHAPES_SIZE = 16
SQUARE_SIDES = (4, 8)
CROSS_LENGTHS = (7, 13)
CROSS_THICKNESS = 2

SAMPLE_RATE = 16000
STFT_WINDOW = 256
STFT_HOP = 128
SPEECH_DURATION = 0.5
SPEECH_SNR_DB = 5.0
SPECTROGRAM_SHAPE = (32, 32)
FORMANT_RANGES = ((400.0, 800.0), (1000.0, 1800.0), (2200.0, 3000.0))
FORMANT_WIDTH = 150.0
BLADE_PASS_RANGE = (12.0, 25.0)


@dataclass
class Dataset:
    """Labelled images of one split; `ids` identify samples within the split"""
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    ids: Optional[np.ndarray] = None
    bands: Optional[np.ndarray] = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise ShapeMismatchError(f"Dataset images must be (N, H, W), got shape {self.images.shape}")
        if self.labels.shape != (self.images.shape[0],):
            raise ShapeMismatchError(f"{self.labels.shape[0]} labels for {self.images.shape[0]} images")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.num_classes):
            raise ValueError(f"Labels must lie in 1..{self.num_classes}, got {self.labels.min()}..{self.labels.max()}")
        if not np.all(np.isfinite(self.images)) or (self.images.size and (self.images.min() < 0 or self.images.max() > 1)):
            raise ValueError("Dataset images must be finite and within [0, 1]")
        self.ids = np.arange(len(self.labels)) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if self.bands is not None:
            self.bands = np.asarray(self.bands, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[Tuple[np.ndarray, int]]:
        for image, label in zip(self.images, self.labels):
            yield image, int(label)

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return (1, int(self.images.shape[1]), int(self.images.shape[2]))

    def sample_keys(self, indices: Optional[Sequence[int]] = None) -> list:
        """Split-qualified sample identifiers, e.g. 'train:17'"""
        ids = self.ids if indices is None else self.ids[np.asarray(indices, dtype=np.int64)]
        return [f"{self.split}:{int(i)}" for i in ids]

    def take(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            images=self.images[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
            split=self.split,
            ids=self.ids[indices],
            bands=None if self.bands is None else self.bands[indices],
        )

    def subset(self, count: int, seed: Optional[int] = None) -> "Dataset":
        """First `count` samples, or a seeded random draw when a seed is given (order preserved)"""
        if count > len(self):
            raise ValueError(f"Requested {count} samples from a {self.split} split of {len(self)}")
        if seed is None:
            return self.take(np.arange(count))
        chosen = np.random.default_rng(seed).choice(len(self), size=count, replace=False)
        return self.take(np.sort(chosen))

    def select_classes(self, stored_labels: Sequence[int]) -> "Dataset":
        """
        Keep samples whose stored IDX label (label - 1) is in `stored_labels`
        and relabel them 1..k in the order given, e.g. digits [0, 1] -> classes [1, 2].
        """
        stored_labels = [int(v) for v in stored_labels]
        if len(set(stored_labels)) != len(stored_labels) or not stored_labels:
            raise ValueError(f"Class selection must list distinct labels, got {stored_labels}")
        stored = self.labels - 1
        keep = np.flatnonzero(np.isin(stored, stored_labels))
        mapping = {value: index + 1 for index, value in enumerate(stored_labels)}
        subset = self.take(keep)
        subset.labels = np.array([mapping[int(v)] for v in stored[keep]], dtype=np.int64)
        subset.num_classes = len(stored_labels)
        return subset


# IDX

def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as handle:
                return handle.read()
        return path.read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"IDX file not found: {path}")
    except (OSError, EOFError) as e:
        raise DatasetFormatError(f"Cannot read IDX file {path}: {e}")


def _write_bytes(path: Union[str, Path], payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        # mtime=0 keeps the gzip header reproducible
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as handle:
            handle.write(payload)
    else:
        path.write_bytes(payload)


def _read_idx_images(path: Union[str, Path]) -> np.ndarray:
    data = _read_bytes(path)
    if len(data) < 16:
        raise DatasetFormatError(f"Image file {path} is truncated: {len(data)} header bytes")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise DatasetFormatError(
            f"Magic number mismatch in image file {path}: 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    needed = count * rows * cols
    if len(data) - 16 < needed:
        raise DatasetFormatError(f"Image file {path} is truncated: {len(data) - 16} of {needed} pixel bytes")
    pixels = np.frombuffer(data, dtype=np.uint8, count=needed, offset=16)
    return pixels.reshape(count, rows, cols)


def _read_idx_labels(path: Union[str, Path]) -> np.ndarray:
    data = _read_bytes(path)
    if len(data) < 8:
        raise DatasetFormatError(f"Label file {path} is truncated: {len(data)} header bytes")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABEL_MAGIC:
        raise DatasetFormatError(
            f"Magic number mismatch in label file {path}: 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    if len(data) - 8 < count:
        raise DatasetFormatError(f"Label file {path} is truncated: {len(data) - 8} of {count} label bytes")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8)


def load_mnist_idx(
    images_path: Union[str, Path],
    labels_path: Union[str, Path],
    split: str = "train",
    stored_labels: Optional[Sequence[int]] = None,
) -> Dataset:
    """
    Parse a big-endian IDX image/label pair; pixels are scaled to [0, 1] and
    labels shifted to 1-based. With `stored_labels` (e.g. digits [0, 1]) only
    those samples are kept, relabelled 1..k; ids stay the file indices.
    """
    pixels = _read_idx_images(images_path)
    raw_labels = _read_idx_labels(labels_path)
    if pixels.shape[0] != raw_labels.shape[0]:
        raise DatasetFormatError(
            f"Count mismatch: {pixels.shape[0]} images in {images_path} but {raw_labels.shape[0]} labels in {labels_path}"
        )
    logger.info(f"Loaded {pixels.shape[0]} {pixels.shape[1]}x{pixels.shape[2]} images from {images_path}")
    if stored_labels is None:
        return Dataset(
            images=pixels.astype(np.float64) / 255.0,
            labels=raw_labels.astype(np.int64) + 1,
            num_classes=int(raw_labels.max()) + 1 if raw_labels.size else 1,
            split=split,
        )
    keep = np.flatnonzero(np.isin(raw_labels, [int(v) for v in stored_labels]))
    dataset = Dataset(
        images=pixels[keep].astype(np.float64) / 255.0,
        labels=raw_labels[keep].astype(np.int64) + 1,
        num_classes=int(max(stored_labels)) + 1,
        split=split,
        ids=keep,
    )
    return dataset.select_classes(stored_labels)


def write_idx(dataset: Dataset, images_path: Union[str, Path], labels_path: Union[str, Path]) -> None:
    """Inverse of load_mnist_idx: pixels quantised to round(255 v), labels stored 0-based"""
    count, rows, cols = dataset.images.shape
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    _write_bytes(images_path, struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols) + pixels.tobytes())
    labels = (dataset.labels - 1).astype(np.uint8)
    _write_bytes(labels_path, struct.pack(">II", IDX_LABEL_MAGIC, count) + labels.tobytes())


def idx_paths(directory: Union[str, Path], split: str) -> Tuple[Path, Path]:
    """Locate the MNIST file pair of a split ('train' or 't10k'), plain or gzipped"""
    directory = Path(directory)
    pair = []
    for kind in ("images-idx3-ubyte", "labels-idx1-ubyte"):
        plain = directory / f"{split}-{kind}"
        gz = plain.with_name(plain.name + ".gz")
        if plain.exists():
            pair.append(plain)
        elif gz.exists():
            pair.append(gz)
        else:
            raise DatasetFormatError(f"Missing {plain.name} (or .gz) in {directory}")
    return pair[0], pair[1]


# Synthetic shapes

def synth_shapes(count: int, seed: int, size: int = SHAPES_SIZE, split: str = "synth-shapes") -> Dataset:
    """
    Binary images of filled squares (class 1) and crosses (class 2).

    Classes alternate so any even count is exactly balanced. Squares have a
    side in [4, 8]; crosses have arm length in [7, 13] and bar thickness 2.
    """
    if count < 2:
        raise ValueError(f"Need at least 2 samples for two classes, got {count}")
    rng = np.random.default_rng(seed)
    images = np.zeros((count, size, size))
    labels = np.empty(count, dtype=np.int64)
    for index in range(count):
        if index % 2 == 0:
            labels[index] = 1
            side = int(rng.integers(SQUARE_SIDES[0], SQUARE_SIDES[1] + 1))
            row, col = rng.integers(0, size - side + 1, size=2)
            images[index, row:row + side, col:col + side] = 1.0
        else:
            labels[index] = 2
            length = int(rng.integers(CROSS_LENGTHS[0], CROSS_LENGTHS[1] + 1))
            row, col = rng.integers(0, size - length + 1, size=2)
            offset = (length - CROSS_THICKNESS) // 2
            images[index, row:row + length, col + offset:col + offset + CROSS_THICKNESS] = 1.0
            images[index, row + offset:row + offset + CROSS_THICKNESS, col:col + length] = 1.0
    return Dataset(images=images, labels=labels, num_classes=2, split=split)


# Audio

@dataclass
class Spectrogram:
    magnitude: np.ndarray  # (window // 2 + 1, frames)
    sample_rate: int
    window: int
    hop: int


def fft_radix2(frames: np.ndarray) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey DFT over the last axis (length must be a power of two)"""
    values = np.asarray(frames, dtype=np.complex128)
    size = values.shape[-1]
    if size < 1 or size & (size - 1):
        raise ValueError(f"Radix-2 FFT needs a power-of-two length, got {size}")
    bits = size.bit_length() - 1
    reverse = np.zeros(size, dtype=np.int64)
    for b in range(bits):
        reverse |= ((np.arange(size) >> b) & 1) << (bits - 1 - b)
    values = values[..., reverse]
    span = 2
    while span <= size:
        half = span // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / span)
        blocks = values.reshape(values.shape[:-1] + (size // span, span))
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        values = np.concatenate([even + odd, even - odd], axis=-1).reshape(values.shape)
        span *= 2
    return values


def stft(
    signal: np.ndarray, window: int = STFT_WINDOW, hop: int = STFT_HOP, sample_rate: int = SAMPLE_RATE
) -> Spectrogram:
    """Magnitudes of periodic-Hann windowed frames, no padding"""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ShapeMismatchError(f"STFT expects a 1-D signal, got shape {signal.shape}")
    if signal.shape[0] < window:
        raise ValueError(f"Signal of {signal.shape[0]} samples is shorter than the {window}-sample window")
    frames = 1 + (signal.shape[0] - window) // hop
    index = np.arange(window)[None, :] + hop * np.arange(frames)[:, None]
    segments = signal[index] * get_window("hann", window, fftbins=True)
    spectrum = fft_radix2(segments)[:, : window // 2 + 1]
    return Spectrogram(magnitude=np.abs(spectrum).T, sample_rate=sample_rate, window=window, hop=hop)


def mix_noise(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """Scale `noise` (tiled or truncated to the clean length) to the requested SNR and add it"""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.resize(np.asarray(noise, dtype=np.float64), clean.shape)
    clean_power = float(np.mean(clean ** 2))
    noise_power = float(np.mean(noise ** 2))
    if clean_power == 0.0:
        raise ValueError("Clean signal is silent; SNR is undefined")
    if noise_power == 0.0:
        raise ValueError("Noise signal is silent; cannot reach the requested SNR")
    gain = np.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0)))
    return clean + gain * noise


def rotor_noise(length: int, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Low-pass tilted broadband noise, amplitude-modulated at a blade-pass rate of 12-25 Hz"""
    white = rng.standard_normal(length)
    tilted = lfilter([1.0], [1.0, -0.7], white)
    blade_rate = rng.uniform(*BLADE_PASS_RANGE)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    t = np.arange(length) / sample_rate
    return tilted * (1.0 + 0.8 * np.sin(2.0 * np.pi * blade_rate * t + phase))


def synth_utterance(
    rng: np.random.Generator, length: int, sample_rate: int = SAMPLE_RATE
) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Harmonic tone burst with formant-like emphasis and silence padding; returns (signal, (start, stop))"""
    margin = int(0.1 * length)
    voiced = int(rng.uniform(0.35, 0.6) * length)
    start = int(rng.integers(margin, length - voiced - margin + 1))
    f0 = rng.uniform(100.0, 220.0)
    formants = [rng.uniform(lo, hi) for lo, hi in FORMANT_RANGES]

    t = np.arange(voiced) / sample_rate
    pitch = f0 * (1.0 + 0.05 * np.sin(2.0 * np.pi * 3.0 * t))
    phase = 2.0 * np.pi * np.cumsum(pitch) / sample_rate
    burst = np.zeros(voiced)
    harmonic = 1
    while harmonic * f0 < 4000.0:
        freq = harmonic * f0
        gain = 0.02 + sum(np.exp(-0.5 * ((freq - f) / FORMANT_WIDTH) ** 2) for f in formants)
        burst += gain * np.sin(harmonic * phase)
        harmonic += 1
    burst *= get_window("hann", voiced, fftbins=False)

    signal = np.zeros(length)
    signal[start:start + voiced] = burst
    return signal, (start, start + voiced)


def _normalize_image(values: np.ndarray) -> np.ndarray:
    low, high = float(values.min()), float(values.max())
    if high <= low:
        return np.zeros_like(values)
    return (values - low) / (high - low)


def spectrogram_image(
    signal: np.ndarray, shape: Tuple[int, int] = SPECTROGRAM_SHAPE, sample_rate: int = SAMPLE_RATE
) -> np.ndarray:
    """STFT -> log(1 + |S|) -> min-max -> bilinear resize; rows are frequency bins (DC first), columns time"""
    magnitude = stft(signal, sample_rate=sample_rate).magnitude
    image = bilinear_resize(_normalize_image(np.log1p(magnitude)), shape)
    return np.clip(image, 0.0, 1.0)


def utterance_band(
    span: Tuple[int, int], length: int, width: int, window: int = STFT_WINDOW, hop: int = STFT_HOP
) -> Tuple[int, int]:
    """Image column range [start, stop) covered by frames overlapping the sample span"""
    frames = 1 + (length - window) // hop
    first = max(0, (span[0] - window) // hop + 1)
    last = min(frames - 1, (span[1] - 1) // hop)
    scale = (width - 1) / max(frames - 1, 1)
    return int(np.floor(first * scale)), min(width, int(np.ceil(last * scale)) + 1)


def render_speech_sample(
    rng: np.random.Generator,
    noisy: bool,
    snr_db: float = SPEECH_SNR_DB,
    duration: float = SPEECH_DURATION,
    shape: Tuple[int, int] = SPECTROGRAM_SHAPE,
    sample_rate: int = SAMPLE_RATE,
) -> Tuple[np.ndarray, Tuple[int, int], np.ndarray]:
    """One utterance, optionally mixed with rotor noise; returns (image, column band, waveform)"""
    length = int(round(duration * sample_rate))
    signal, span = synth_utterance(rng, length, sample_rate)
    if noisy:
        signal = mix_noise(signal, rotor_noise(length, rng, sample_rate), snr_db)
    image = spectrogram_image(signal, shape, sample_rate)
    return image, utterance_band(span, length, shape[1]), signal


def synth_speech_task(
    count: int,
    seed: int,
    snr_db: float = SPEECH_SNR_DB,
    shape: Tuple[int, int] = SPECTROGRAM_SHAPE,
    split: str = "synth-speech",
) -> Dataset:
    """Spectrogram images of clean (class 1) and rotor-noise-corrupted (class 2) utterances; odd indices are noisy"""
    if count < 1:
        raise ValueError(f"Need at least one sample, got {count}")
    rng = np.random.default_rng(seed)
    images = np.zeros((count,) + tuple(shape))
    labels = np.empty(count, dtype=np.int64)
    bands = np.empty((count, 2), dtype=np.int64)
    for index in range(count):
        noisy = index % 2 == 1
        images[index], bands[index], _ = render_speech_sample(rng, noisy, snr_db, shape=shape)
        labels[index] = 2 if noisy else 1
    return Dataset(images=images, labels=labels, num_classes=2, split=split, bands=bands)


def read_wav(path: Union[str, Path]) -> np.ndarray:
    """16-bit PCM mono 16 kHz WAV -> float signal in [-1, 1)"""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DatasetFormatError(f"WAV file not found: {path}")
    except ValueError as e:
        raise DatasetFormatError(f"Cannot parse WAV file {path}: {e}")
    if rate != SAMPLE_RATE:
        raise DatasetFormatError(f"WAV file {path} has sample rate {rate}, expected {SAMPLE_RATE}")
    if data.dtype != np.int16:
        raise DatasetFormatError(f"WAV file {path} holds {data.dtype} samples, expected 16-bit PCM")
    if data.ndim != 1:
        raise DatasetFormatError(f"WAV file {path} has {data.shape[1]} channels, expected mono")
    return data.astype(np.float64) / 32768.0


def load_input(path: Union[str, Path], shape: Tuple[int, int]) -> np.ndarray:
    """Read a .wav, .npy or image file as a [0, 1] image of the given (height, width); only audio is resized"""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".wav":
        return spectrogram_image(read_wav(path), shape)
    if suffix == ".npy":
        try:
            image = np.load(path, allow_pickle=False).astype(np.float64)
        except (FileNotFoundError, ValueError) as e:
            raise DatasetFormatError(f"Cannot read array {path}: {e}")
        image = np.squeeze(image)
        if image.shape != tuple(shape):
            raise ShapeMismatchError(f"Input {path} has shape {image.shape}, model expects {tuple(shape)}")
        if not np.all(np.isfinite(image)) or image.min() < 0 or image.max() > 1:
            raise DatasetFormatError(f"Input {path} must hold finite values in [0, 1]")
        return image
    image = read_grayscale(path)
    if image.shape != tuple(shape):
        raise ShapeMismatchError(f"Input {path} has shape {image.shape}, model expects {tuple(shape)}")
    return image
