"""Backend selection for the grid kernels.

The compiled extension is used when it was built; otherwise the NumPy
fallback. Set ``HOMVAR_KERNELS=python`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("HOMVAR_KERNELS", "auto").lower() != "python":
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        if os.environ.get("HOMVAR_KERNELS", "").lower() == "cython":
            raise

closed_chains = _impl.closed_chains
pairwise_sum = _impl.pairwise_sum
lagrangian_grid = _impl.lagrangian_grid
