"""Maritime mesocyclone recognition toolkit.

Subpackages cover the full pipeline: SLP candidate detection, SAR composite
preprocessing, augmentation, a from-scratch separable-convolution residual
classifier, imbalance-aware training, and gradient-based interpretability.
"""

__version__ = "0.1.0"

from .grid import RasterGrid, read_pgrid, write_pgrid

__all__ = ["RasterGrid", "read_pgrid", "write_pgrid", "__version__"]
