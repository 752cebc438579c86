"""Select the compiled kernel when built, else the numpy fallback.

Set ``SEMIPC_BACKEND=python`` to force the fallback.
"""

import os

from . import _nwcore_py

if os.environ.get("SEMIPC_BACKEND", "").lower() == "python":
    kernel_sums = _nwcore_py.kernel_sums
    BACKEND = "python"
else:
    try:
        from ._nwcore import kernel_sums
        BACKEND = "cython"
    except ImportError:
        kernel_sums = _nwcore_py.kernel_sums
        BACKEND = "python"

__all__ = ["BACKEND", "kernel_sums"]
