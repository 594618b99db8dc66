"""Alignment kernel selection: compiled extension if available, numpy fallback otherwise.

Set VPKL_PURE_PYTHON=1 to force the fallback (used by the benchmark and tests).
"""

import os

if os.environ.get("VPKL_PURE_PYTHON"):
    from vpkl.align._dp_py import semiglobal_score

    BACKEND = "python"
else:
    try:
        from vpkl.align._dp import semiglobal_score  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from vpkl.align._dp_py import semiglobal_score  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["semiglobal_score", "BACKEND"]
