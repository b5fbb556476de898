"""
Dual-rate SGD for weights and tap positions with the poly schedule and
the per-step position clamp.

The clamp keeps every updated coordinate inside
``(floor(p_last) - eps, ceil(p_last) + eps)``: interpolation weights and
their gradients were computed from the cell around ``p_last``, so a step
may only leave that cell by the slack ``eps``.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .config import TrainConfig
from .errors import ArgumentError, ShapeError
from .irrconv import PositionSet
from .nn import GradientSet, IrregularConvLayer, LayerParameters, Network

CLAMP_DELTA = 1e-9

__all__ = [
    "CLAMP_DELTA",
    "ShapeSnapshot",
    "clamp_positions",
    "clamp_violations",
    "poly_lr",
    "record_snapshot",
    "sgd_step",
    "take_snapshots",
]


def poly_lr(base: float, iter: int, config: TrainConfig) -> float:
    """``base * (1 - iter / max_iter) ** poly_power``."""
    if iter < 0 or iter > config.max_iter:
        raise ArgumentError(f"iteration {iter} outside [0, {config.max_iter}]")
    return base * (1.0 - iter / config.max_iter) ** config.poly_power


def clamp_positions(p_last: PositionSet, p_candidate: PositionSet, epsilon_clamp: float) -> PositionSet:
    """Clip each coordinate to ``[floor(last) - eps + delta, ceil(last) + eps - delta]``."""
    if p_last.offsets.shape != p_candidate.offsets.shape:
        raise ShapeError(f"position shapes differ: {p_last.offsets.shape} vs {p_candidate.offsets.shape}")
    last = p_last.offsets
    lower = np.floor(last) - epsilon_clamp + CLAMP_DELTA
    upper = np.ceil(last) + epsilon_clamp - CLAMP_DELTA
    return p_candidate.replace_offsets(np.clip(p_candidate.offsets, lower, upper))


def clamp_violations(before: PositionSet, after: PositionSet, epsilon_clamp: float) -> int:
    """Number of coordinates outside the open clamp interval of their previous value."""
    last = before.offsets
    inside = (np.floor(last) - epsilon_clamp < after.offsets) & (after.offsets < np.ceil(last) + epsilon_clamp)
    return int(np.count_nonzero(~inside))


def sgd_step(
    params: Sequence[LayerParameters],
    grads: GradientSet,
    lr_w: float,
    lr_p: float,
    epsilon_clamp: float = 0.25,
) -> List[LayerParameters]:
    """Plain SGD on weights and positions; positions are clamped before being stored."""
    if len(params) != len(grads.layers):
        raise ShapeError(f"{len(params)} parameter sets but {len(grads.layers)} gradient sets")
    updated = []
    for index, (layer_params, layer_grads) in enumerate(zip(params, grads.layers)):
        weights = layer_params.weights
        if weights is not None:
            if layer_grads.weights is None or layer_grads.weights.shape != weights.shape:
                raise ShapeError("weight gradient does not match weights", layer_index=index)
            weights = weights - lr_w * layer_grads.weights

        positions = layer_params.positions
        if positions is not None and layer_grads.positions is not None:
            if layer_grads.positions.shape != positions.offsets.shape:
                raise ShapeError("position gradient does not match positions", layer_index=index)
            candidate = positions.replace_offsets(positions.offsets - lr_p * layer_grads.positions)
            positions = clamp_positions(positions, candidate, epsilon_clamp)
        updated.append(LayerParameters(weights=weights, positions=positions))
    return updated


@dataclass(frozen=True)
class ShapeSnapshot:
    """Positions of one layer at one iteration; ``learnable`` is False for fixed grids."""

    layer: int
    iteration: int
    positions: PositionSet
    learnable: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer": self.layer,
            "iteration": self.iteration,
            "learnable": self.learnable,
            "grid": list(self.positions.grid),
            "positions": self.positions.offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ShapeSnapshot":
        positions = PositionSet(np.array(data["positions"], dtype=np.float64), tuple(data["grid"]))
        return cls(
            layer=int(data["layer"]),
            iteration=int(data["iteration"]),
            positions=positions,
            learnable=bool(data.get("learnable", True)),
        )


def take_snapshots(net: Network, iter: int) -> List[ShapeSnapshot]:
    """Snapshot of every spatial conv layer (irregular ones learnable, regular ones fixed)."""
    snapshots = []
    for index in net.spatial_layers():
        layer = net.layers[index]
        snapshots.append(ShapeSnapshot(
            layer=index,
            iteration=iter,
            positions=PositionSet(layer.positions.offsets, layer.positions.grid),
            learnable=isinstance(layer, IrregularConvLayer),
        ))
    return snapshots


def record_snapshot(net: Network, iter: int, every_k: int) -> Optional[List[ShapeSnapshot]]:
    """Snapshots when ``iter`` is a multiple of ``every_k``, else None."""
    if every_k < 1:
        raise ArgumentError(f"every_k must be >= 1, got {every_k}")
    if iter % every_k:
        return None
    return take_snapshots(net, iter)
