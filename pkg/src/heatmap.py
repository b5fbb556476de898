"""
Single-pixel gradient heatmaps.

Backpropagates a one-hot output gradient (1.0 at one class and pixel,
zeros elsewhere) to the input and records |d input| summed over channels.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .errors import ArgumentError
from .nn import Network
from .tensor import Tensor


def single_pixel_heatmap(net: Network, image: Tensor, pixel: Tuple[int, int], class_index: int) -> np.ndarray:
    """
    Args:
        image: (1, C, H, W) input
        pixel: (row, col) in output coordinates

    Returns:
        (H, W) array of summed absolute input gradients
    """
    if image.shape[0] != 1:
        raise ArgumentError(f"heatmap expects a single image, got batch {image.shape[0]}")
    scores = net.forward(image)
    _, classes, out_h, out_w = scores.shape
    row, col = pixel
    if not (0 <= row < out_h and 0 <= col < out_w):
        raise ArgumentError(f"pixel ({row}, {col}) outside output extents {out_h}x{out_w}")
    if not 0 <= class_index < classes:
        raise ArgumentError(f"class {class_index} outside [0, {classes})")

    grad_out = np.zeros(scores.shape)
    grad_out[0, class_index, row, col] = 1.0
    grads = net.backward(Tensor(grad_out))
    return np.abs(grads.input.data[0]).sum(axis=0)


def to_pgm(heatmap: np.ndarray) -> bytes:
    """Binary P5 graymap, maxval 255, scaled by the per-image maximum."""
    height, width = heatmap.shape
    peak = float(heatmap.max()) if heatmap.size else 0.0
    if peak > 0:
        pixels = np.rint(heatmap / peak * 255.0).astype(np.uint8)
    else:
        pixels = np.zeros((height, width), dtype=np.uint8)
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def to_csv(heatmap: np.ndarray) -> str:
    return "\n".join(",".join(f"{value:.17g}" for value in row) for row in heatmap) + "\n"


def save_heatmap(heatmap: np.ndarray, prefix: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``<prefix>.csv`` (raw values) and ``<prefix>.pgm``."""
    prefix = Path(prefix)
    csv_path = prefix.with_name(prefix.name + ".csv")
    pgm_path = prefix.with_name(prefix.name + ".pgm")
    csv_path.write_text(to_csv(heatmap), encoding="utf-8")
    pgm_path.write_bytes(to_pgm(heatmap))
    return csv_path, pgm_path
