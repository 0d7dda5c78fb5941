"""YOHO sound event detection: regression of event boundaries per time bin.

The pipeline runs audio -> log-mel windows -> MobileNet-style CNN -> 9x9
output grids -> event lists, plus a synthetic noisy-mixture generator and
segment-based evaluation for cross-domain experiments.
"""

__version__ = "0.1.0"

CLASSES = ("babycry", "glassbreak", "gunshot")
