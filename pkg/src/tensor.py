"""
Dense 4-D tensor container (batch, channel, height, width) of float64 values.

Tensors returned by library operations are read-only; use ``Tensor.copy()``
to get a writable one. There is no autodiff: gradients are computed
explicitly by ``irrconv`` and ``nn``.

Random numbers come from numpy's PCG64 bit generator seeded with a 64-bit
integer; normal samples use numpy's ziggurat ``standard_normal``. See
docs/FORMATS.md for the exact algorithms and the binary tensor format.
"""

import io
import struct
from enum import Enum
from pathlib import Path
from typing import Iterable, Tuple, Union

import numpy as np

from .errors import ArgumentError, FormatError, NumericError, ShapeError, SizeError, StateError

Shape = Tuple[int, int, int, int]

TENSOR_MAGIC = b"ICT1"
_HEADER = struct.Struct("<4sQQQQ")
_MAX_ELEMENTS = np.iinfo(np.intp).max // 8


class BinaryOp(str, Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"


_UFUNCS = {
    BinaryOp.ADD: np.add,
    BinaryOp.SUB: np.subtract,
    BinaryOp.MUL: np.multiply,
}


def check_finite(array: np.ndarray, what: str) -> None:
    """Raise NumericError if ``array`` holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        bad = int(np.flatnonzero(~np.isfinite(array))[0])
        raise NumericError(f"{what}: non-finite value at flat index {bad}")


def _validate_shape(shape: Iterable[int]) -> Shape:
    dims = tuple(int(d) for d in shape)
    if len(dims) != 4:
        raise ShapeError(f"expected 4 extents, got {len(dims)}")
    if any(d < 0 for d in dims):
        raise ArgumentError(f"extents must be non-negative, got {dims}")
    total = 1
    for d in dims:
        total *= d
    if total > _MAX_ELEMENTS:
        raise SizeError(f"extents {dims} exceed addressable size")
    return dims  # type: ignore[return-value]


class Tensor:
    """Row-major (batch, channel, height, width) float64 array."""

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray, frozen: bool = True):
        array = np.array(data, dtype=np.float64, order="C")
        if array.ndim != 4:
            raise ShapeError(f"tensor must be 4-D, got {array.ndim}-D")
        if frozen:
            array.flags.writeable = False
        self._data = array

    @classmethod
    def from_array(cls, data: Union[np.ndarray, Iterable], frozen: bool = True) -> "Tensor":
        """Build a tensor from any array-like, reshaping 1-D/2-D input to 4-D."""
        array = np.array(data, dtype=np.float64)
        while array.ndim < 4:
            array = array[np.newaxis]
        check_finite(array, "tensor data")
        return cls(array, frozen=frozen)

    @property
    def shape(self) -> Shape:
        return tuple(int(d) for d in self._data.shape)  # type: ignore[return-value]

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def frozen(self) -> bool:
        return not self._data.flags.writeable

    def copy(self) -> "Tensor":
        """Writable deep copy."""
        return Tensor(self._data.copy(), frozen=False)

    def freeze(self) -> "Tensor":
        self._data.flags.writeable = False
        return self

    def get(self, b: int, c: int, h: int, w: int) -> float:
        return float(self._data[b, c, h, w])

    def set(self, b: int, c: int, h: int, w: int, value: float) -> None:
        if self.frozen:
            raise StateError("tensor is read-only; call copy() first")
        self._data[b, c, h, w] = value

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def child_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Stream number ``index`` spawned from ``seed``, independent of ``make_rng(seed)``."""
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(index + 1)
    return np.random.Generator(np.random.PCG64(children[index]))


def zeros(shape: Iterable[int]) -> Tensor:
    dims = _validate_shape(shape)
    return Tensor(np.zeros(dims, dtype=np.float64))


def randn(shape: Iterable[int], rng: np.random.Generator, stddev: float = 1.0) -> Tensor:
    """I.i.d. normal samples with mean 0 and the given standard deviation."""
    if stddev < 0:
        raise ArgumentError(f"stddev must be >= 0, got {stddev}")
    dims = _validate_shape(shape)
    return Tensor(rng.normal(0.0, stddev, size=dims))


def elementwise_binary(a: Tensor, b: Tensor, kind: Union[str, BinaryOp]) -> Tensor:
    op = BinaryOp(kind)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    result = _UFUNCS[op](a.data, b.data)
    check_finite(result, f"elementwise {op.value}")
    return Tensor(result)


# --- Serialization ---

def to_binary(tensor: Tensor) -> bytes:
    """``ICT1`` + four little-endian uint64 extents + little-endian float64 data."""
    header = _HEADER.pack(TENSOR_MAGIC, *tensor.shape)
    return header + tensor.data.astype("<f8", copy=False).tobytes(order="C")


def from_binary(blob: bytes, offset: int = 0) -> Tuple[Tensor, int]:
    """
    Decode one tensor starting at ``offset``.

    Returns:
        (tensor, offset just past the tensor)
    """
    if len(blob) - offset < _HEADER.size:
        raise FormatError("truncated tensor header")
    magic, *dims = _HEADER.unpack_from(blob, offset)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    try:
        dims = _validate_shape(dims)
    except (ArgumentError, SizeError) as e:
        raise FormatError(f"bad tensor extents: {e}") from e
    count = int(np.prod(dims, dtype=np.int64))
    start = offset + _HEADER.size
    end = start + 8 * count
    if len(blob) < end:
        raise FormatError(f"truncated tensor data: need {end - start} bytes, have {len(blob) - start}")
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=start).astype(np.float64)
    return Tensor(data.reshape(dims)), end


def save(tensor: Tensor, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_bytes(to_binary(tensor))
    return path


def load(path: Union[str, Path]) -> Tensor:
    blob = Path(path).read_bytes()
    tensor, end = from_binary(blob)
    if end != len(blob):
        raise FormatError(f"{path}: {len(blob) - end} trailing bytes after tensor")
    return tensor


def to_csv(tensor: Tensor) -> str:
    """One row per (batch, channel): height x width values flattened row-major."""
    b, c, h, w = tensor.shape
    rows = tensor.data.reshape(b * c, h * w)
    out = io.StringIO()
    np.savetxt(out, rows, delimiter=",", fmt="%.17g")
    return out.getvalue()


def save_csv(tensor: Tensor, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(to_csv(tensor), encoding="utf-8")
    return path
