#!/usr/bin/env python
"""
Irregular convolution toolkit launcher.

Usage:
    python icnn.py gradcheck --seed 0 --trials 50
    python icnn.py synth --out data/strokes --len 9 --angle 0
    python icnn.py train --data data/strokes --arch irregular --out runs/irregular.icm
    python icnn.py dump-shapes --in runs/irregular.icm.shapes.json --out shapes.json
    python icnn.py heatmap --model runs/irregular.icm --image data/strokes/images.ict --pixel 14,14 --class 1 --out heat
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
