"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback
is used. Set ``PCAGLUE_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels as python_backend

try:
    if os.environ.get("PCAGLUE_PURE", "") not in ("", "0"):
        raise ImportError("pure backend forced")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "compiled" if compiled_backend is not None else "python"

data_table = backend.data_table
dp_solve = backend.dp_solve
render = backend.render
