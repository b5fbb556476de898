"""
Model and shape-snapshot files.

Model file layout (all little-endian):

    b"ICM1" | uint32 header length | UTF-8 JSON header | tensors...

The header holds the format version, the layer specs and the iteration the
model was saved at. It is followed, for every conv layer in order, by the
weights as an ICT1 tensor of shape (c_out, c_in, rows, cols) and, for
irregular layers only, the positions as an ICT1 tensor (1, c_in, n, 2).
"""

import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import tensor
from .errors import FormatError, ICNNError
from .irrconv import PositionSet
from .nn import IrregularConvLayer, LayerKind, LayerParameters, LayerSpec, Network, ReLULayer, RegularConvLayer
from .optim import ShapeSnapshot, take_snapshots
from .tensor import Tensor

MODEL_MAGIC = b"ICM1"
FORMAT_VERSION = 1
SNAPSHOT_FORMAT = "icnn-shapes"
_LENGTH = struct.Struct("<I")


def model_to_bytes(net: Network, iteration: int = 0, metadata: Optional[Dict[str, Any]] = None) -> bytes:
    header = {
        "version": FORMAT_VERSION,
        "iteration": int(iteration),
        "layers": [spec.to_dict() for spec in net.specs],
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MODEL_MAGIC, _LENGTH.pack(len(header_bytes)), header_bytes]
    for layer in net.layers:
        if isinstance(layer, ReLULayer):
            continue
        spec = layer.spec
        chunks.append(tensor.to_binary(Tensor(layer.weights.reshape((spec.c_out, spec.c_in) + spec.grid))))
        if isinstance(layer, IrregularConvLayer):
            chunks.append(tensor.to_binary(Tensor(layer.positions.offsets[np.newaxis])))
    return b"".join(chunks)


def _read_header(blob: bytes) -> Tuple[Dict[str, Any], int]:
    if blob[:4] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {blob[:4]!r}")
    if len(blob) < 4 + _LENGTH.size:
        raise FormatError("truncated model header")
    (length,) = _LENGTH.unpack_from(blob, 4)
    start = 4 + _LENGTH.size
    if len(blob) < start + length:
        raise FormatError("truncated model header")
    try:
        header = json.loads(blob[start:start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"model header is not valid JSON: {e}") from e
    if not isinstance(header, dict) or header.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {header.get('version') if isinstance(header, dict) else None}")
    return header, start + length


def model_from_bytes(blob: bytes) -> Tuple[Network, Dict[str, Any]]:
    """
    Decode a model file.

    Returns:
        (network, header)
    """
    header, offset = _read_header(blob)
    try:
        specs = [LayerSpec.from_dict(entry) for entry in header["layers"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad layer spec in model header: {e}") from e

    layers = []
    for index, spec in enumerate(specs):
        if spec.kind is LayerKind.RELU:
            layers.append(ReLULayer(spec))
            continue
        weights, offset = tensor.from_binary(blob, offset)
        if weights.shape != (spec.c_out, spec.c_in) + spec.grid:
            raise FormatError(f"layer {index}: weights {weights.shape} do not match spec")
        weights = weights.data.reshape(spec.c_out, spec.c_in, spec.n).copy()
        if spec.kind is LayerKind.IRREGULAR_CONV:
            positions, offset = tensor.from_binary(blob, offset)
            if positions.shape != (1, spec.c_in, spec.n, 2):
                raise FormatError(f"layer {index}: positions {positions.shape} do not match spec")
            layers.append(IrregularConvLayer(spec, weights, PositionSet(positions.data[0].copy(), spec.grid)))
        else:
            layers.append(RegularConvLayer(spec, weights))
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after model data")
    try:
        return Network(layers), header
    except ICNNError as e:
        raise FormatError(f"inconsistent model: {e}") from e


def save_model(net: Network, path: Union[str, Path], iteration: int = 0,
               metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.write_bytes(model_to_bytes(net, iteration, metadata))
    return path


def load_model(path: Union[str, Path]) -> Tuple[Network, Dict[str, Any]]:
    return model_from_bytes(Path(path).read_bytes())


def parameters_equal(a: Sequence[LayerParameters], b: Sequence[LayerParameters]) -> bool:
    """Bit-exact comparison of two parameter lists."""
    if len(a) != len(b):
        return False
    for left, right in zip(a, b):
        for x, y in ((left.weights, right.weights),
                     (_offsets(left.positions), _offsets(right.positions))):
            if (x is None) != (y is None):
                return False
            if x is not None and (x.shape != y.shape or x.tobytes() != y.tobytes()):
                return False
    return True


def _offsets(positions: Optional[PositionSet]) -> Optional[np.ndarray]:
    return None if positions is None else positions.offsets


# --- Snapshots ---

def snapshots_to_json(snapshots: Sequence[ShapeSnapshot]) -> str:
    document = {
        "format": SNAPSHOT_FORMAT,
        "version": FORMAT_VERSION,
        "snapshots": [snapshot.to_dict() for snapshot in snapshots],
    }
    return json.dumps(document, indent=1)


def snapshots_from_json(text: str) -> List[ShapeSnapshot]:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"snapshot file is not valid JSON: {e}") from e
    if not isinstance(document, dict) or document.get("format") != SNAPSHOT_FORMAT:
        raise FormatError("not a shape snapshot file")
    try:
        return [ShapeSnapshot.from_dict(entry) for entry in document["snapshots"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad snapshot entry: {e}") from e


def save_snapshots(snapshots: Sequence[ShapeSnapshot], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(snapshots_to_json(snapshots), encoding="utf-8")
    return path


def load_snapshots(path: Union[str, Path]) -> List[ShapeSnapshot]:
    return snapshots_from_json(Path(path).read_text(encoding="utf-8"))


def read_shapes(path: Union[str, Path]) -> List[ShapeSnapshot]:
    """Snapshots from either a model file (one snapshot per spatial layer) or a snapshot JSON file."""
    blob = Path(path).read_bytes()
    if blob[:4] == MODEL_MAGIC:
        net, header = model_from_bytes(blob)
        return take_snapshots(net, int(header.get("iteration", 0)))
    try:
        text = blob.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: neither a model file nor a snapshot file") from e
    return snapshots_from_json(text)
