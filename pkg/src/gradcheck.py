"""
Gradient Checker - compares analytic irregular-conv gradients with
central finite differences of an independently coded forward pass.

Checks, per random configuration:
- weights W
- input I
- tap positions P

The scalar loss is ``sum(G * OUT)`` for a fixed random projection G, so
the analytic side is driven with ``grad_out = G``.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from . import irrconv, oracle
from .errors import ArgumentError
from .irrconv import IrregularKernel, PositionSet
from .tensor import Tensor, make_rng
from .utils import cpu_time_s, logger

PARAMETER_CLASSES = ("weights", "input", "positions")


@dataclass
class GradientCase:
    """One random irregular-conv instance plus the loss projection."""

    input: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray
    grid: Tuple[int, int]
    stride: Tuple[int, int]
    projection: np.ndarray

    @property
    def kernel(self) -> IrregularKernel:
        return IrregularKernel(self.weights, PositionSet(self.offsets, self.grid), self.stride)

    def loss(self, input=None, weights=None, offsets=None) -> float:
        out = oracle.naive_irregular_conv(
            self.input if input is None else input,
            self.weights if weights is None else weights,
            self.offsets if offsets is None else offsets,
            self.grid,
            self.stride,
        )
        return float(np.sum(self.projection * out))


@dataclass
class GradcheckReport:
    trials: int
    max_error: Dict[str, float] = field(default_factory=lambda: dict.fromkeys(PARAMETER_CLASSES, 0.0))
    constant_max_abs: float = 0.0
    elapsed_s: float = 0.0

    def passed(self, name: str, tolerance: float) -> bool:
        return self.max_error[name] < tolerance


def _near_integer(values: np.ndarray, margin: float) -> np.ndarray:
    return np.abs(values - np.rint(values)) < margin


class GradientChecker:
    """Random-configuration gradient checks with a finite-difference oracle."""

    TOLERANCE = 1e-4
    STEP = oracle.DEFAULT_STEP
    INTEGER_MARGIN = 1e-3
    MAX_EXTENT = 8
    MAX_CHANNELS = 3
    MAX_GRID = 3

    @classmethod
    def random_case(cls, rng: np.random.Generator) -> GradientCase:
        """Input <= 8x8, channels <= 3, n <= 9, positions >= 1e-3 away from integers."""
        grid = (int(rng.integers(1, cls.MAX_GRID + 1)), int(rng.integers(1, cls.MAX_GRID + 1)))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        batch = int(rng.integers(1, 3))
        c_in = int(rng.integers(1, cls.MAX_CHANNELS + 1))
        c_out = int(rng.integers(1, cls.MAX_CHANNELS + 1))
        height = int(rng.integers(grid[0], cls.MAX_EXTENT + 1))
        width = int(rng.integers(grid[1], cls.MAX_EXTENT + 1))
        n = grid[0] * grid[1]

        offsets = np.repeat(irrconv.nominal_offsets(*grid)[np.newaxis], c_in, axis=0)
        offsets = offsets + rng.uniform(-1.5, 1.5, size=offsets.shape)
        while True:
            close = _near_integer(offsets, cls.INTEGER_MARGIN)
            if not close.any():
                break
            offsets[close] = rng.uniform(-1.5, 1.5, size=int(close.sum()))

        out_h, out_w = irrconv.output_extents(height, width, grid, stride)
        return GradientCase(
            input=rng.normal(size=(batch, c_in, height, width)),
            weights=rng.normal(size=(c_out, c_in, n)),
            offsets=offsets,
            grid=grid,
            stride=stride,
            projection=rng.normal(size=(batch, c_out, out_h, out_w)),
        )

    @classmethod
    def constant_case(cls, rng: np.random.Generator, value: float = 1.5) -> GradientCase:
        """Constant image with 3x3 taps kept inside the unit cells next to the center."""
        case = cls.random_case(rng)
        grid = (3, 3)
        batch, c_in = case.input.shape[:2]
        height, width = max(case.input.shape[2], 3), max(case.input.shape[3], 3)
        offsets = rng.uniform(-0.95, 0.95, size=(c_in, 9, 2))
        offsets[_near_integer(offsets, cls.INTEGER_MARGIN)] = 0.5
        out_h, out_w = irrconv.output_extents(height, width, grid, case.stride)
        return GradientCase(
            input=np.full((batch, c_in, height, width), value),
            weights=rng.normal(size=(case.weights.shape[0], c_in, 9)),
            offsets=offsets,
            grid=grid,
            stride=case.stride,
            projection=rng.normal(size=(batch, case.weights.shape[0], out_h, out_w)),
        )

    @classmethod
    def analytic_gradients(cls, case: GradientCase) -> Dict[str, np.ndarray]:
        kernel = case.kernel
        x = Tensor(case.input)
        _, patches = irrconv.forward_with_patches(x, kernel)
        grad_out = Tensor(case.projection)
        return {
            "weights": irrconv.backward_weights(grad_out, patches),
            "input": irrconv.backward_input(grad_out, kernel, patches).data,
            "positions": irrconv.backward_positions(grad_out, kernel, x, patches),
        }

    @classmethod
    def numeric_gradients(cls, case: GradientCase) -> Dict[str, np.ndarray]:
        return {
            "weights": oracle.finite_diff_grad(lambda w: case.loss(weights=w), case.weights, cls.STEP),
            "input": oracle.finite_diff_grad(lambda i: case.loss(input=i), case.input, cls.STEP),
            "positions": oracle.finite_diff_grad(lambda p: case.loss(offsets=p), case.offsets, cls.STEP),
        }

    @classmethod
    def check_case(cls, case: GradientCase) -> Dict[str, float]:
        """Max relative error per parameter class."""
        analytic = cls.analytic_gradients(case)
        numeric = cls.numeric_gradients(case)
        return {name: oracle.max_relative_error(analytic[name], numeric[name]) for name in PARAMETER_CLASSES}

    @classmethod
    def check_constant(cls, rng: np.random.Generator) -> Tuple[bool, float]:
        """Position gradient on a flat image: analytic exactly 0, oracle within 1e-8."""
        case = cls.constant_case(rng)
        analytic = cls.analytic_gradients(case)["positions"]
        numeric = oracle.finite_diff_grad(lambda p: case.loss(offsets=p), case.offsets, cls.STEP)
        worst = float(max(np.abs(analytic).max(), np.abs(numeric).max()))
        return bool(np.all(analytic == 0.0) and np.abs(numeric).max() <= oracle.ERROR_FLOOR), worst

    @classmethod
    def run_full_check(cls, seed: int, trials: int) -> Tuple[bool, List[str], GradcheckReport]:
        """
        Run all gradient checks.
        Returns: (all_ok, list_of_messages, report)
        """
        if trials < 1:
            raise ArgumentError(f"trials must be >= 1, got {trials}")
        start = cpu_time_s()
        rng = make_rng(seed)
        report = GradcheckReport(trials=trials)
        messages = []

        for trial in range(trials):
            errors = cls.check_case(cls.random_case(rng))
            for name, error in errors.items():
                report.max_error[name] = max(report.max_error[name], error)
            logger.debug(f"trial {trial}: " + ", ".join(f"{k}={v:.3e}" for k, v in errors.items()))

        constant_ok, report.constant_max_abs = cls.check_constant(rng)
        report.elapsed_s = cpu_time_s() - start

        all_ok = constant_ok
        for name in PARAMETER_CLASSES:
            ok = report.passed(name, cls.TOLERANCE)
            messages.append(f"{'PASS' if ok else 'FAIL'} {name}: max relative error {report.max_error[name]:.3e}")
            all_ok = all_ok and ok
        messages.append(
            f"{'PASS' if constant_ok else 'FAIL'} constant image: max |position gradient| {report.constant_max_abs:.3e}"
        )
        return all_ok, messages, report


def print_gradcheck_report(seed: int, trials: int) -> bool:
    """Print a gradient check report to stdout."""
    wall = time.perf_counter()
    print("=" * 60)
    print(f"GRADIENT CHECK  seed={seed}  trials={trials}")
    print("=" * 60)

    all_ok, messages, report = GradientChecker.run_full_check(seed, trials)
    for msg in messages:
        print(msg)

    print("=" * 60)
    print(f"{'PASSED' if all_ok else 'FAILED'} in {time.perf_counter() - wall:.1f}s (cpu {report.elapsed_s:.1f}s)")
    return all_ok
