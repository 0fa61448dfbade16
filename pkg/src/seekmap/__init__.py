"""seekmap: object-centric open-vocabulary volumetric mapping with submaps."""

from seekmap.kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
