"""Surrogate-guided width tuning for encoder-decoder segmentation networks.

Fit quadratic latency/power and rational mIoU surrogates over the
``(b, h)`` width design space, minimize a normalized weighted objective
over the continuous box, and snap the optimum to a buildable config.
"""

__version__ = "0.1.0"
