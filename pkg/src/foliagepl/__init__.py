"""Site-specific foliage path-loss modeling for millimeter-wave links."""

from ._kernels import BACKEND

__version__ = '0.1.0'
__all__ = ['BACKEND', '__version__']
