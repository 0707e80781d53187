"""Backend selection for the geometry kernels.

The compiled extension is used when it imports; set ``FOLIAGEPL_PURE=1`` to
force the numpy fallback.
"""

import os

BACKEND = 'python'

if not os.environ.get('FOLIAGEPL_PURE'):
    try:
        from ._ckernels import footprint_count, mask_path_count, trunk_count
        BACKEND = 'cython'
    except ImportError:
        pass

if BACKEND == 'python':
    from ._pykernels import footprint_count, mask_path_count, trunk_count

__all__ = ['BACKEND', 'footprint_count', 'mask_path_count', 'trunk_count']
