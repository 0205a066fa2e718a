"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set ``CROWDPREF_PURE_PYTHON=1``
to force the fallback. Both backends produce bitwise-identical results.
"""

import os

from . import _pykernels

if os.environ.get("CROWDPREF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

sample_path = _impl.sample_path
q_sweeps = _impl.q_sweeps
greedy_returns = _impl.greedy_returns

__all__ = ["BACKEND", "sample_path", "q_sweeps", "greedy_returns"]
