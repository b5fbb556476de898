"""
Irregular convolution: learnable tap positions, bilinear sampling and the
layers, optimizer and tools built on them
"""

__version__ = "1.0.0"

from . import irrconv
from . import nn
from . import optim
from . import tensor
from . import utils

__all__ = ["irrconv", "nn", "optim", "tensor", "utils"]
