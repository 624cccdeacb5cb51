"""Hot kernels with a compiled backend and a numpy fallback.

The Cython extension is used when it was built; set ``LIDARODOM_PURE_PYTHON=1``
to force the numpy versions. ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

try:
    if os.environ.get("LIDARODOM_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python requested")
    from . import _ckernels as _active
    BACKEND = "cython"
except ImportError:
    _active = _pykernels
    BACKEND = "python"

EDGE = _pykernels.EDGE
PLANE = _pykernels.PLANE

scan_smoothness = _active.scan_smoothness
select_features = _active.select_features
normal_equations = _active.normal_equations
covariance_eigen = _active.covariance_eigen
residual_rows = _pykernels.residual_rows


def backends():
    """Map of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
