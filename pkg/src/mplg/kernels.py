"""Backend selection for the hot loops.

The compiled extension ``mplg._ckernels`` is used when importable; otherwise
(or with ``MPLG_PURE_PYTHON=1`` in the environment) the NumPy versions in
``mplg._kernels_py`` are used.  Both expose ``locate``, ``evaluate`` and
``composed_accumulate`` with identical signatures.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("MPLG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

locate = _impl.locate
evaluate = _impl.evaluate
composed_accumulate = _impl.composed_accumulate
