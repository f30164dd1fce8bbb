"""Select the compiled kernels when available, numpy otherwise.

Set ``FOLLOWER_PURE_PYTHON=1`` to force the numpy path.
"""

import os

if os.environ.get("FOLLOWER_PURE_PYTHON"):
    from follower import _pykernels as kernels
else:
    try:
        from follower import _ckernels as kernels
    except ImportError:
        from follower import _pykernels as kernels

BACKEND = "cython" if kernels.__name__.endswith("_ckernels") else "python"

__all__ = ["BACKEND", "kernels"]
