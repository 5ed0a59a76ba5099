"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``ENGCAP_BACKEND=python`` to force the fallback.
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

python_kernels = _fallback

compiled_kernels = None
if os.environ.get("ENGCAP_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("engcap._kernels not built; using numpy fallback")

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"
