"""
Minimal layer stack for dense prediction: irregular conv, regular conv,
ReLU and a per-pixel softmax cross-entropy head.

All convolutions are valid (no padding) and bias-free. Gradients are
explicit: every layer caches what its backward pass needs during forward.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import irrconv
from .errors import ArgumentError, ShapeError, StateError
from .irrconv import Grid, IrregularKernel, PositionSet, Stride
from .tensor import Tensor, check_finite, randn


class LayerKind(str, Enum):
    IRREGULAR_CONV = "irregular_conv"
    REGULAR_CONV = "regular_conv"
    RELU = "relu"


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one layer. ReLU ignores channels, grid and stride."""

    kind: LayerKind
    c_in: int = 0
    c_out: int = 0
    grid: Grid = (1, 1)
    stride: Stride = (1, 1)

    def __post_init__(self):
        kind = LayerKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))
        if kind is LayerKind.RELU:
            return
        if self.c_in < 1 or self.c_out < 1:
            raise ArgumentError(f"{kind.value}: channel counts must be >= 1, got {self.c_in}->{self.c_out}")
        if min(self.grid) < 1 or min(self.stride) < 1:
            raise ArgumentError(f"{kind.value}: grid and stride must be positive, got {self.grid}, {self.stride}")
        if kind is LayerKind.IRREGULAR_CONV and self.grid == (1, 1):
            raise ArgumentError("1x1 convolutions must be regular_conv, not irregular_conv")

    @property
    def is_conv(self) -> bool:
        return self.kind is not LayerKind.RELU

    @property
    def n(self) -> int:
        return self.grid[0] * self.grid[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "c_in": self.c_in,
            "c_out": self.c_out,
            "grid": list(self.grid),
            "stride": list(self.stride),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerSpec":
        return cls(
            kind=LayerKind(data["kind"]),
            c_in=int(data.get("c_in", 0)),
            c_out=int(data.get("c_out", 0)),
            grid=tuple(data.get("grid", (1, 1))),
            stride=tuple(data.get("stride", (1, 1))),
        )


def conv(c_in: int, c_out: int, grid: Grid = (3, 3), stride: Stride = (1, 1), irregular: bool = True) -> LayerSpec:
    """Shorthand for a conv spec; 1x1 grids always come out regular."""
    kind = LayerKind.IRREGULAR_CONV if irregular and tuple(grid) != (1, 1) else LayerKind.REGULAR_CONV
    return LayerSpec(kind, c_in, c_out, grid, stride)


def relu() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


@dataclass
class LayerParameters:
    weights: Optional[np.ndarray] = None
    positions: Optional[PositionSet] = None


@dataclass
class LayerGradients:
    weights: Optional[np.ndarray] = None
    positions: Optional[np.ndarray] = None


@dataclass
class GradientSet:
    layers: List[LayerGradients] = field(default_factory=list)
    input: Optional[Tensor] = None


class Layer(ABC):
    def __init__(self, spec: LayerSpec):
        self.spec = spec

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        ...

    @abstractmethod
    def backward(self, grad_out: Tensor) -> Tuple[Tensor, LayerGradients]:
        ...

    def parameters(self) -> LayerParameters:
        return LayerParameters()

    def load_parameters(self, params: LayerParameters) -> None:
        pass


class ReLULayer(Layer):
    def __init__(self, spec: Optional[LayerSpec] = None):
        super().__init__(spec or relu())
        self._active: Optional[np.ndarray] = None

    def forward(self, x: Tensor) -> Tensor:
        self._active = x.data > 0.0
        return Tensor(np.where(self._active, x.data, 0.0))

    def backward(self, grad_out: Tensor) -> Tuple[Tensor, LayerGradients]:
        if self._active is None:
            raise StateError("relu: backward called before forward")
        if grad_out.shape != self._active.shape:
            raise ShapeError(f"relu: grad {grad_out.shape} does not match activation {self._active.shape}")
        return Tensor(np.where(self._active, grad_out.data, 0.0)), LayerGradients()


class _ConvLayer(Layer):
    def __init__(self, spec: LayerSpec, weights: np.ndarray):
        super().__init__(spec)
        self.weights = self._check_weights(weights)

    def _check_weights(self, weights: np.ndarray) -> np.ndarray:
        weights = np.array(weights, dtype=np.float64)
        expected = (self.spec.c_out, self.spec.c_in, self.spec.n)
        if weights.shape != expected:
            raise ShapeError(f"{self.spec.kind.value}: weights {weights.shape}, expected {expected}")
        check_finite(weights, "layer weights")
        return weights

    def _check_input(self, x: Tensor) -> None:
        if x.shape[1] != self.spec.c_in:
            raise ShapeError(f"{self.spec.kind.value}: input has {x.shape[1]} channels, layer expects {self.spec.c_in}")


class IrregularConvLayer(_ConvLayer):
    """Convolution with learnable tap positions shared by all output channels."""

    def __init__(self, spec: LayerSpec, weights: np.ndarray, positions: PositionSet):
        super().__init__(spec, weights)
        if positions.c_in != spec.c_in or positions.grid != spec.grid:
            raise ShapeError(
                f"positions (c_in={positions.c_in}, grid={positions.grid}) do not match spec "
                f"(c_in={spec.c_in}, grid={spec.grid})"
            )
        self.positions = positions
        self._input: Optional[Tensor] = None
        self._patches: Optional[irrconv.InterpolatedPatchMatrix] = None

    @property
    def kernel(self) -> IrregularKernel:
        return IrregularKernel(self.weights, self.positions, self.spec.stride)

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        out, self._patches = irrconv.forward_with_patches(x, self.kernel)
        self._input = x
        return out

    def backward(self, grad_out: Tensor) -> Tuple[Tensor, LayerGradients]:
        if self._patches is None:
            raise StateError("irregular_conv: backward called before forward")
        kernel = self.kernel
        grads = LayerGradients(
            weights=irrconv.backward_weights(grad_out, self._patches),
            positions=irrconv.backward_positions(grad_out, kernel, self._input, self._patches),
        )
        return irrconv.backward_input(grad_out, kernel, self._patches), grads

    def parameters(self) -> LayerParameters:
        return LayerParameters(weights=self.weights.copy(), positions=self.positions)

    def load_parameters(self, params: LayerParameters) -> None:
        self.weights = self._check_weights(params.weights)
        if params.positions is not None:
            self.positions = params.positions


class RegularConvLayer(_ConvLayer):
    """Classical im2col convolution at the integer grid; also covers 1x1."""

    def __init__(self, spec: LayerSpec, weights: np.ndarray):
        super().__init__(spec, weights)
        self._cols: Optional[np.ndarray] = None
        self._input_shape: Optional[Tuple[int, int, int, int]] = None
        self._out_extents: Optional[Tuple[int, int]] = None

    @property
    def positions(self) -> PositionSet:
        """The fixed integer grid, for shape dumps."""
        return irrconv.init_positions(*self.spec.grid, 0.0, c_in=self.spec.c_in)

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        batch, channels, height, width = x.shape
        out_h, out_w = irrconv.output_extents(height, width, self.spec.grid, self.spec.stride)
        s_r, s_c = self.spec.stride
        windows = sliding_window_view(x.data, self.spec.grid, axis=(2, 3))[:, :, ::s_r, ::s_c]
        self._cols = np.ascontiguousarray(
            windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * self.spec.n)
        )
        self._input_shape = x.shape
        self._out_extents = (out_h, out_w)
        out = self._cols @ self.weights.reshape(self.spec.c_out, -1).T
        return Tensor(out.reshape(batch, out_h, out_w, self.spec.c_out).transpose(0, 3, 1, 2))

    def backward(self, grad_out: Tensor) -> Tuple[Tensor, LayerGradients]:
        if self._cols is None:
            raise StateError("regular_conv: backward called before forward")
        batch, c_in, _, _ = self._input_shape
        out_h, out_w = self._out_extents
        if grad_out.shape != (batch, self.spec.c_out, out_h, out_w):
            raise ShapeError(f"regular_conv: grad {grad_out.shape} does not match output {(batch, self.spec.c_out, out_h, out_w)}")
        grad = grad_out.data.transpose(0, 2, 3, 1).reshape(batch * out_h * out_w, self.spec.c_out)
        grad_weights = (grad.T @ self._cols).reshape(self.weights.shape)

        rows, cols = self.spec.grid
        s_r, s_c = self.spec.stride
        dcols = (grad @ self.weights.reshape(self.spec.c_out, -1)).reshape(batch, out_h, out_w, c_in, rows, cols)
        dcols = dcols.transpose(0, 3, 4, 5, 1, 2)
        grad_input = np.zeros(self._input_shape)
        for ki in range(rows):
            for kj in range(cols):
                grad_input[:, :, ki:ki + s_r * (out_h - 1) + 1:s_r, kj:kj + s_c * (out_w - 1) + 1:s_c] += dcols[:, :, ki, kj]
        return Tensor(grad_input), LayerGradients(weights=grad_weights)

    def parameters(self) -> LayerParameters:
        return LayerParameters(weights=self.weights.copy())

    def load_parameters(self, params: LayerParameters) -> None:
        self.weights = self._check_weights(params.weights)


def init_weights(spec: LayerSpec, rng: np.random.Generator) -> np.ndarray:
    """He-style normal init, fan-in counted in taps: stddev sqrt(2 / (c_in * n))."""
    stddev = math.sqrt(2.0 / (spec.c_in * spec.n))
    sample = randn((spec.c_out, spec.c_in) + spec.grid, rng, stddev)
    return sample.data.reshape(spec.c_out, spec.c_in, spec.n).copy()


def build_layer(spec: LayerSpec, rng: np.random.Generator, epsilon_init: float) -> Layer:
    if spec.kind is LayerKind.RELU:
        return ReLULayer(spec)
    weights = init_weights(spec, rng)
    if spec.kind is LayerKind.IRREGULAR_CONV:
        positions = irrconv.init_positions(*spec.grid, epsilon_init, c_in=spec.c_in)
        return IrregularConvLayer(spec, weights, positions)
    return RegularConvLayer(spec, weights)


def validate_chain(specs: Sequence[LayerSpec]) -> None:
    channels = None
    for index, spec in enumerate(specs):
        if not spec.is_conv:
            continue
        if channels is not None and spec.c_in != channels:
            raise ShapeError(f"expects {spec.c_in} input channels, previous layer gives {channels}", layer_index=index)
        channels = spec.c_out


class Network:
    """Sequential stack of layers with cached activations for backward."""

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        validate_chain(self.specs)
        self._forward_done = False
        self._output_shape: Optional[Tuple[int, ...]] = None

    @classmethod
    def build(cls, specs: Sequence[LayerSpec], rng: np.random.Generator, epsilon_init: float = 0.05) -> "Network":
        validate_chain(specs)
        return cls([build_layer(spec, rng, epsilon_init) for spec in specs])

    @property
    def specs(self) -> List[LayerSpec]:
        return [layer.spec for layer in self.layers]

    @property
    def in_channels(self) -> Optional[int]:
        for spec in self.specs:
            if spec.is_conv:
                return spec.c_in
        return None

    def spatial_layers(self) -> List[int]:
        """Indices of conv layers with a grid larger than 1x1."""
        return [i for i, spec in enumerate(self.specs) if spec.is_conv and spec.grid != (1, 1)]

    def output_extents(self, height: int, width: int) -> Tuple[int, int]:
        for index, spec in enumerate(self.specs):
            if spec.is_conv:
                try:
                    height, width = irrconv.output_extents(height, width, spec.grid, spec.stride)
                except ShapeError as e:
                    raise ShapeError(str(e), layer_index=index) from e
        return height, width

    def forward(self, x: Tensor) -> Tensor:
        self._forward_done = False
        for index, layer in enumerate(self.layers):
            try:
                x = layer.forward(x)
            except ShapeError as e:
                raise ShapeError(str(e), layer_index=index) from e
        self._forward_done = True
        self._output_shape = x.shape
        return x

    def backward(self, grad_out: Tensor) -> GradientSet:
        if not self._forward_done:
            raise StateError("network backward called before forward")
        if grad_out.shape != self._output_shape:
            raise ShapeError(f"grad_out {grad_out.shape} does not match network output {self._output_shape}")
        grads: List[LayerGradients] = [LayerGradients() for _ in self.layers]
        grad = grad_out
        for index in reversed(range(len(self.layers))):
            grad, grads[index] = self.layers[index].backward(grad)
        return GradientSet(layers=grads, input=grad)

    def parameters(self) -> List[LayerParameters]:
        return [layer.parameters() for layer in self.layers]

    def load_parameters(self, params: Sequence[LayerParameters]) -> None:
        if len(params) != len(self.layers):
            raise ShapeError(f"{len(params)} parameter sets for {len(self.layers)} layers")
        for layer, layer_params in zip(self.layers, params):
            layer.load_parameters(layer_params)


def network_forward(net: Network, input: Tensor) -> Tensor:
    return net.forward(input)


def network_backward(net: Network, grad_out: Tensor) -> GradientSet:
    return net.backward(grad_out)


# --- Loss head ---

def softmax(scores: Tensor) -> np.ndarray:
    """Class probabilities per pixel along the channel axis."""
    shifted = scores.data - scores.data.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def pixel_softmax_xent(scores: Tensor, labels: np.ndarray) -> Tuple[float, Tensor]:
    """
    Mean per-pixel softmax cross-entropy and its gradient w.r.t. the scores.

    Args:
        scores: (batch, classes, H, W) class scores
        labels: (batch, H, W) integer class map

    Returns:
        (loss, grad) with grad = (softmax - onehot) / (batch * H * W)
    """
    labels = np.asarray(labels)
    batch, classes, height, width = scores.shape
    if labels.shape != (batch, height, width):
        raise ShapeError(f"labels {labels.shape} do not match scores {(batch, height, width)}")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ArgumentError(f"label values must lie in [0, {classes}), got [{labels.min()}, {labels.max()}]")

    shifted = scores.data - scores.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_prob = shifted - log_norm
    picked = np.take_along_axis(log_prob, labels[:, np.newaxis], axis=1)
    count = batch * height * width
    loss = float(-picked.sum() / count)

    grad = np.exp(log_prob)
    np.put_along_axis(grad, labels[:, np.newaxis], np.take_along_axis(grad, labels[:, np.newaxis], axis=1) - 1.0, axis=1)
    return loss, Tensor(grad / count)


def crop_labels(labels: np.ndarray, extents: Tuple[int, int]) -> np.ndarray:
    """Center crop of a (batch, H, W) label map to the network's output extents."""
    _, height, width = labels.shape
    out_h, out_w = extents
    top, left = (height - out_h) // 2, (width - out_w) // 2
    return labels[:, top:top + out_h, left:left + out_w]
