"""Flow-matching completion of partial semantic maps for object-goal navigation."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
