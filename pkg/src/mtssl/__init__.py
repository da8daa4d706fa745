"""Online manifold tiling feeding a semi-supervised output neuron."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
