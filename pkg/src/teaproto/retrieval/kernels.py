"""Kernel selection: the compiled extension when built, numpy otherwise.

Set ``TEAPROTO_PURE=1`` to force the numpy path.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
cosine_scores = _fallback.cosine_scores
top_k = _fallback.top_k
accumulate_rows = _fallback.accumulate_rows

if not os.environ.get("TEAPROTO_PURE"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        cosine_scores = _kernels.cosine_scores
        top_k = _kernels.top_k
        accumulate_rows = _kernels.accumulate_rows
