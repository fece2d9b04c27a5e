"""String similarity kernels with a compiled fast path.

The Cython extension is used when it built successfully; otherwise the
pure-Python implementation takes over transparently. Set OPPORTUNE_PURE=1
to force the pure backend (used by the benchmark and parity tests).
"""

import os

from opportune._kernels import _strings

BACKEND = "pure"
jaro_similarity = _strings.jaro_similarity
jaro_winkler_similarity = _strings.jaro_winkler_similarity

if not os.environ.get("OPPORTUNE_PURE"):
    try:
        from opportune._kernels import _speedups

        jaro_similarity = _speedups.jaro_similarity
        jaro_winkler_similarity = _speedups.jaro_winkler_similarity
        BACKEND = "compiled"
    except ImportError:
        pass

__all__ = ["BACKEND", "jaro_similarity", "jaro_winkler_similarity"]
