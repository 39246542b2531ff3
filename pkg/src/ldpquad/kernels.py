"""Backend selection for the channel kernels.

The compiled extension is used when it imports; setting ``LDPQUAD_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("LDPQUAD_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

ni_accumulate = _active.ni_accumulate
ni_sanitize = _active.ni_sanitize
