"""Select the kernel backend at import time.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
NumPy fallback in ``_pykernels`` is used.  Setting ``DDMPREF_PURE_PYTHON=1``
forces the fallback.
"""

import os

from . import _pykernels

python_kernels = _pykernels
compiled_kernels = None

try:
    from . import _ckernels as compiled_kernels  # type: ignore[no-redef]
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("DDMPREF_PURE_PYTHON") != "1":
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = python_kernels
    BACKEND = "python"
