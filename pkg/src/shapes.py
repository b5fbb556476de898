"""
Kernel shape statistics and per-tap trajectories across snapshots.
"""

from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .irrconv import PositionSet, nominal_offsets
from .optim import ShapeSnapshot


def layer_spread(positions: PositionSet) -> Tuple[float, float]:
    """Standard deviation of p_x (rows) and p_y (cols) over all taps and channels."""
    flat = positions.offsets.reshape(-1, 2)
    return float(np.std(flat[:, 0])), float(np.std(flat[:, 1]))


def tap_statistics(positions: PositionSet) -> List[Dict[str, Any]]:
    """
    Per nominal grid position: mean and std across input channels, and the
    mean displacement from the nominal offset.
    """
    nominal = nominal_offsets(*positions.grid)
    offsets = positions.offsets
    stats = []
    for tap in range(positions.n):
        coords = offsets[:, tap]
        displacement = np.linalg.norm(coords - nominal[tap], axis=1)
        stats.append({
            "tap": tap,
            "nominal": nominal[tap].tolist(),
            "mean": coords.mean(axis=0).tolist(),
            "std": coords.std(axis=0).tolist(),
            "displacement": float(displacement.mean()),
        })
    return stats


def latest_snapshots(snapshots: Sequence[ShapeSnapshot]) -> List[ShapeSnapshot]:
    """The last-iteration snapshot of every layer, ordered by layer."""
    latest: Dict[int, ShapeSnapshot] = {}
    for snapshot in snapshots:
        current = latest.get(snapshot.layer)
        if current is None or snapshot.iteration >= current.iteration:
            latest[snapshot.layer] = snapshot
    return [latest[layer] for layer in sorted(latest)]


def shape_summary(snapshots: Sequence[ShapeSnapshot]) -> Dict[str, Any]:
    layers = []
    for snapshot in latest_snapshots(snapshots):
        spread_x, spread_y = layer_spread(snapshot.positions)
        layers.append({
            "layer": snapshot.layer,
            "iteration": snapshot.iteration,
            "learnable": snapshot.learnable,
            "grid": list(snapshot.positions.grid),
            "spread": {"p_x": spread_x, "p_y": spread_y},
            "taps": tap_statistics(snapshot.positions),
        })
    return {"layers": layers}


def trajectories(snapshots: Sequence[ShapeSnapshot]) -> Dict[str, Any]:
    """Per layer, per input channel, per tap: the list of (iteration, p_x, p_y)."""
    by_layer: Dict[int, List[ShapeSnapshot]] = {}
    for snapshot in snapshots:
        by_layer.setdefault(snapshot.layer, []).append(snapshot)

    layers = []
    for layer in sorted(by_layer):
        history = sorted(by_layer[layer], key=lambda s: s.iteration)
        first = history[0].positions
        nominal = nominal_offsets(*first.grid)
        channels = []
        for channel in range(first.c_in):
            taps = []
            for tap in range(first.n):
                taps.append({
                    "tap": tap,
                    "nominal": nominal[tap].tolist(),
                    "trajectory": [
                        [s.iteration, float(s.positions.offsets[channel, tap, 0]), float(s.positions.offsets[channel, tap, 1])]
                        for s in history
                    ],
                })
            channels.append({"channel": channel, "taps": taps})
        layers.append({
            "layer": layer,
            "grid": list(first.grid),
            "learnable": history[0].learnable,
            "channels": channels,
        })
    return {"layers": layers}
