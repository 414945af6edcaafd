"""Voxel-lattice energy surrogate: 3D residual CNN plus SmoothGrad saliency."""

from . import data, model, saliency, train

__version__ = "1.0.0"

__all__ = ["data", "model", "saliency", "train", "__version__"]
