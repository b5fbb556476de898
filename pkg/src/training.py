"""
Training loop for the toy dense-prediction network.

Handles architecture building, batch sampling, the dual-rate SGD step with
position clamping, CSV progress output, shape snapshots and evaluation.
"""

import signal
import sys
import threading
from dataclasses import dataclass, field
from typing import IO, List, Optional, Sequence

import numpy as np

from . import metrics
from .config import TrainConfig
from .errors import ArgumentError, NumericError, ShapeError
from .nn import IrregularConvLayer, LayerSpec, Network, conv, crop_labels, pixel_softmax_xent, relu
from .optim import ShapeSnapshot, clamp_violations, poly_lr, sgd_step, take_snapshots
from .synth import SyntheticDataset
from .tensor import Tensor, child_rng, make_rng
from .utils import logger, memory_usage_mb

ARCHITECTURES = ("irregular", "regular")
CSV_HEADER = "iteration,loss,lr_weights,lr_positions"


def toy_architecture(arch: str, in_channels: int, num_classes: int, hidden: int = 8,
                     irregular_from: int = 0) -> List[LayerSpec]:
    """
    conv 3x3 (in -> hidden) -> ReLU -> conv 3x3 (hidden -> hidden) -> ReLU -> 1x1 (hidden -> classes).

    Args:
        arch: "irregular" or "regular"; both variants hold the same weights
        irregular_from: with arch "irregular", only 3x3 layers whose index
            is >= this value are irregular
    """
    if arch not in ARCHITECTURES:
        raise ArgumentError(f"unknown architecture '{arch}', expected one of {ARCHITECTURES}")
    if irregular_from < 0:
        raise ArgumentError(f"irregular_from must be >= 0, got {irregular_from}")
    plan = [(in_channels, hidden), (hidden, hidden)]
    specs: List[LayerSpec] = []
    for c_in, c_out in plan:
        irregular = arch == "irregular" and len(specs) >= irregular_from
        specs.append(conv(c_in, c_out, (3, 3), irregular=irregular))
        specs.append(relu())
    specs.append(conv(hidden, num_classes, (1, 1), irregular=False))
    return specs


def evaluate(net: Network, dataset: SyntheticDataset, batch_size: int = 16) -> dict:
    """Pixel accuracy and mean IoU on the whole dataset, labels cropped to the output."""
    _, _, height, width = dataset.images.shape
    extents = net.output_extents(height, width)
    confusion = np.zeros((dataset.num_classes, dataset.num_classes), dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        images = Tensor(dataset.images.data[start:start + batch_size])
        labels = crop_labels(dataset.labels[start:start + batch_size], extents)
        scores = net.forward(images)
        confusion += metrics.confusion_matrix(scores, labels, dataset.num_classes)
    return {
        "pixel_accuracy": metrics.accuracy_from_confusion(confusion),
        "mean_iou": metrics.iou_from_confusion(confusion),
    }


@dataclass
class TrainResult:
    losses: List[float] = field(default_factory=list)
    snapshots: List[ShapeSnapshot] = field(default_factory=list)
    iterations: int = 0
    stopped_early: bool = False
    pixel_accuracy: float = 0.0
    mean_iou: float = 0.0


class TrainingSession:
    """
    One training run. Progress goes to ``out`` as CSV; a bounded tail of the
    emitted lines is kept for ``get_last_logs``.
    """

    MAX_LOG_LINES = 500
    KEEP_LOG_LINES = 300

    def __init__(self, config: TrainConfig, dataset: SyntheticDataset, specs: Sequence[LayerSpec],
                 snapshot_every: int = 0, out: Optional[IO[str]] = None):
        self.config = config.validate()
        if snapshot_every < 0:
            raise ArgumentError(f"snapshot_every must be >= 0, got {snapshot_every}")
        self.dataset = dataset
        self.snapshot_every = snapshot_every
        self.out = out if out is not None else sys.stdout
        self.net = Network.build(specs, make_rng(config.seed), config.epsilon_init)
        self._batches = child_rng(config.seed)
        self.stop_event = threading.Event()
        self.log_lines: List[str] = []

        _, _, height, width = dataset.images.shape
        if self.net.in_channels != dataset.images.shape[1]:
            raise ShapeError(f"network expects {self.net.in_channels} input channels, "
                             f"dataset has {dataset.images.shape[1]}")
        self.extents = self.net.output_extents(height, width)

    def _emit(self, line: str) -> None:
        print(line, file=self.out)
        self.log_lines.append(line)
        if len(self.log_lines) > self.MAX_LOG_LINES:
            self.log_lines = self.log_lines[-self.KEEP_LOG_LINES:]

    def get_last_logs(self, n: int = 50) -> str:
        """Get last N log lines."""
        return "\n".join(self.log_lines[-n:])

    def stop(self) -> None:
        """Finish the current iteration, then stop."""
        self.stop_event.set()

    def _sample_batch(self):
        indices = self._batches.integers(0, len(self.dataset), size=self.config.batch_size)
        images = Tensor(self.dataset.images.data[indices])
        labels = crop_labels(self.dataset.labels[indices], self.extents)
        return images, labels

    def step(self, iteration: int) -> float:
        """One SGD step; returns the loss before the update."""
        config = self.config
        lr_w = poly_lr(config.lr_weights, iteration, config)
        lr_p = poly_lr(config.lr_positions, iteration, config)
        images, labels = self._sample_batch()

        scores = self.net.forward(images)
        loss, grad = pixel_softmax_xent(scores, labels)
        if not np.isfinite(loss):
            raise NumericError(f"iteration {iteration}: loss is not finite")
        grads = self.net.backward(grad)

        before = self.net.parameters()
        after = sgd_step(before, grads, lr_w, lr_p, config.epsilon_clamp)
        for index, layer in enumerate(self.net.layers):
            if isinstance(layer, IrregularConvLayer):
                violations = clamp_violations(before[index].positions, after[index].positions, config.epsilon_clamp)
                if violations:
                    raise NumericError(f"iteration {iteration}: {violations} position coordinates escaped the clamp")
        self.net.load_parameters(after)

        self._emit(f"{iteration},{loss:.17g},{lr_w:.17g},{lr_p:.17g}")
        return loss

    def _snapshot_due(self, iteration: int) -> bool:
        if iteration == 0:
            return True
        return self.snapshot_every > 0 and iteration % self.snapshot_every == 0

    def run(self) -> TrainResult:
        """Run up to max_iter steps; SIGINT in the main thread triggers ``stop``."""
        config = self.config
        result = TrainResult()
        logger.info(f"Training {len(self.net.layers)} layers for {config.max_iter} iterations "
                    f"(batch {config.batch_size}, seed {config.seed}); memory {memory_usage_mb():.1f} MB")

        previous_handler = None
        if threading.current_thread() is threading.main_thread():
            previous_handler = signal.signal(signal.SIGINT, lambda signum, frame: self.stop())
        try:
            self._emit(CSV_HEADER)
            for iteration in range(config.max_iter):
                if self.stop_event.is_set():
                    result.stopped_early = True
                    logger.warning(f"Stopped after {iteration} iterations")
                    break
                if self._snapshot_due(iteration):
                    result.snapshots.extend(take_snapshots(self.net, iteration))
                result.losses.append(self.step(iteration))
                result.iterations = iteration + 1
                if config.eval_every and result.iterations % config.eval_every == 0:
                    scores = evaluate(self.net, self.dataset, config.batch_size)
                    logger.info(f"iteration {result.iterations}: pixel accuracy {scores['pixel_accuracy']:.4f}, "
                                f"mIoU {scores['mean_iou']:.4f}")
        finally:
            if previous_handler is not None:
                signal.signal(signal.SIGINT, previous_handler)

        if not result.snapshots or result.snapshots[-1].iteration != result.iterations:
            result.snapshots.extend(take_snapshots(self.net, result.iterations))

        scores = evaluate(self.net, self.dataset, config.batch_size)
        result.pixel_accuracy = scores["pixel_accuracy"]
        result.mean_iou = scores["mean_iou"]
        logger.info(f"Finished {result.iterations} iterations: pixel accuracy {result.pixel_accuracy:.4f}, "
                    f"mIoU {result.mean_iou:.4f}; memory {memory_usage_mb():.1f} MB")
        return result
