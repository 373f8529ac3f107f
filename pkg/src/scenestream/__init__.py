"""scenestream: streaming 3D scene understanding toolkit.

Bounded spatial memory over RGB-D streams, oriented-box detection metrics
with strict/lenient ground truth, a text grammar for scene descriptions,
and a synthetic room simulator + replay harness to exercise the whole loop.
"""

__version__ = "0.1.0"
