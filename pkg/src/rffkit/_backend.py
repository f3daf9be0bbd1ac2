"""Backend selection: compiled extension if available, numpy otherwise.

Set ``RFFKIT_BACKEND=python`` to force the pure-numpy implementations
(useful for benchmarking and for debugging suspected extension issues).
The two backends agree to rounding error but not necessarily bit-for-bit;
within one backend all operations are deterministic.
"""

from __future__ import annotations

import os

from . import _core_py

_forced = os.environ.get("RFFKIT_BACKEND", "").lower()

if _forced in ("", "compiled"):
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        _impl = _core_py
        BACKEND = "python"
elif _forced == "python":
    _impl = _core_py
    BACKEND = "python"
else:
    raise RuntimeError(f"RFFKIT_BACKEND must be 'compiled' or 'python', got {_forced!r}")

cos_features_dense = _impl.cos_features_dense
cos_features_sparse = _impl.cos_features_sparse
floyd_subsets = _impl.floyd_subsets
subset_exp_mean = _impl.subset_exp_mean
