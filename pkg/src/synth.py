"""
Synthetic stroke dataset for toy dense-prediction training.

Each image holds ``strokes`` straight segments of ``length`` pixels at
``angle`` degrees (0 = horizontal, counter-clockwise positive) labeled
class 1, plus ``distractors`` shorter segments of the same orientation and
intensity labeled background. Separating the two needs context along the
stroke direction beyond a 3x3 footprint. Distractors are opt-in, so with the
defaults and ``noise = 0`` every background pixel is exactly 0.

Files written by ``save_dataset``:
    images.ict    (N, 1, S, S) float64
    labels.ict    (N, 1, S, S) class ids stored as float64
    manifest.txt  flat key = value pairs echoing every generator parameter
"""

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import toml

from . import tensor
from .errors import ArgumentError, FormatError
from .tensor import Tensor, child_rng, make_rng
from .utils import ensure_dir

NUM_CLASSES = 2
IMAGES_FILE = "images.ict"
LABELS_FILE = "labels.ict"
MANIFEST_FILE = "manifest.txt"


@dataclass(frozen=True)
class SynthParams:
    size: int = 32
    images: int = 16
    strokes: int = 4
    length: int = 7
    angle: float = 0.0
    thickness: int = 1
    distractors: int = 0
    distractor_length: int = 3
    noise: float = 0.0
    seed: int = 0

    def validate(self) -> "SynthParams":
        if self.size < 3:
            raise ArgumentError(f"size must be >= 3, got {self.size}")
        if self.images < 1:
            raise ArgumentError(f"images must be >= 1, got {self.images}")
        if self.strokes < 0 or self.distractors < 0:
            raise ArgumentError("stroke and distractor counts must be >= 0")
        if not 1 <= self.length <= self.size:
            raise ArgumentError(f"length must lie in [1, {self.size}], got {self.length}")
        if not 1 <= self.distractor_length <= self.size:
            raise ArgumentError(f"distractor length must lie in [1, {self.size}], got {self.distractor_length}")
        if self.thickness < 1:
            raise ArgumentError(f"thickness must be >= 1, got {self.thickness}")
        if not (self.noise >= 0 and math.isfinite(self.noise)):
            raise ArgumentError(f"noise stddev must be >= 0, got {self.noise}")
        if not math.isfinite(self.angle):
            raise ArgumentError(f"angle must be finite, got {self.angle}")
        if not 0 <= self.seed < 2 ** 64:
            raise ArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SyntheticDataset:
    images: Tensor
    labels: np.ndarray
    params: SynthParams

    @property
    def num_classes(self) -> int:
        return NUM_CLASSES

    def __len__(self) -> int:
        return self.images.shape[0]


def segment_mask(size: int, center: np.ndarray, length: int, angle: float, thickness: int) -> np.ndarray:
    """Boolean (size, size) mask of a rasterized segment, clipped to the image."""
    theta = math.radians(angle)
    direction = np.array([-math.sin(theta), math.cos(theta)])
    normal = np.array([math.cos(theta), math.sin(theta)])
    half = (length - 1) / 2.0
    along = np.linspace(-half, half, max(2 * length, 1))
    across = np.arange(thickness) - (thickness - 1) / 2.0
    points = (center[np.newaxis, np.newaxis]
              + along[:, np.newaxis, np.newaxis] * direction
              + across[np.newaxis, :, np.newaxis] * normal).reshape(-1, 2)
    pixels = np.rint(points).astype(np.int64)
    inside = np.all((pixels >= 0) & (pixels < size), axis=1)
    mask = np.zeros((size, size), dtype=bool)
    mask[pixels[inside, 0], pixels[inside, 1]] = True
    return mask


def _centers(rng: np.random.Generator, count: int, size: int, length: int) -> np.ndarray:
    margin = min(length / 2.0, (size - 1) / 2.0)
    return rng.uniform(margin, size - 1 - margin, size=(count, 2))


def generate(params: SynthParams) -> SyntheticDataset:
    """Deterministic for a given parameter set."""
    params.validate()
    rng = make_rng(params.seed)
    noise_rng = child_rng(params.seed)
    size = params.size
    images = np.zeros((params.images, 1, size, size))
    labels = np.zeros((params.images, size, size), dtype=np.int64)

    for index in range(params.images):
        strokes = np.zeros((size, size), dtype=bool)
        for center in _centers(rng, params.strokes, size, params.length):
            strokes |= segment_mask(size, center, params.length, params.angle, params.thickness)
        distractors = np.zeros((size, size), dtype=bool)
        for center in _centers(rng, params.distractors, size, params.distractor_length):
            distractors |= segment_mask(size, center, params.distractor_length, params.angle, params.thickness)

        images[index, 0][strokes | distractors] = 1.0
        labels[index][strokes] = 1
        if params.noise > 0:
            images[index, 0] += noise_rng.normal(0.0, params.noise, size=(size, size))

    return SyntheticDataset(Tensor(images), labels, params)


def save_dataset(dataset: SyntheticDataset, out_dir: Union[str, Path]) -> Path:
    out = ensure_dir(out_dir)
    tensor.save(dataset.images, out / IMAGES_FILE)
    tensor.save(Tensor(dataset.labels[:, np.newaxis].astype(np.float64)), out / LABELS_FILE)
    (out / MANIFEST_FILE).write_text(toml.dumps(dataset.params.to_dict()), encoding="utf-8")
    return out


def _read_manifest(path: Path) -> SynthParams:
    try:
        values = toml.loads(path.read_text(encoding="utf-8"))
    except toml.TomlDecodeError as e:
        raise FormatError(f"{path}: {e}") from e
    known = {f.name for f in fields(SynthParams)}
    unknown = set(values) - known
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys {sorted(unknown)}")
    return SynthParams(**values)


def load_dataset(data_dir: Union[str, Path]) -> SyntheticDataset:
    """Read a dataset directory; labels must be non-negative integers matching the images."""
    data_dir = Path(data_dir)
    images = tensor.load(data_dir / IMAGES_FILE)
    label_tensor = tensor.load(data_dir / LABELS_FILE)
    batch, _, height, width = images.shape
    if label_tensor.shape != (batch, 1, height, width):
        raise FormatError(f"labels {label_tensor.shape} do not match images {images.shape}")
    raw = label_tensor.data[:, 0]
    if np.any(raw < 0) or np.any(raw != np.rint(raw)):
        raise FormatError("labels must be non-negative integers")
    manifest = data_dir / MANIFEST_FILE
    params = _read_manifest(manifest) if manifest.exists() else SynthParams(size=height, images=batch)
    return SyntheticDataset(images, raw.astype(np.int64), params)
