"""Hot-kernel selection: compiled Cython core with a pure numpy fallback.

The compiled extension is preferred when importable; setting SEEGRAPH_PURE=1
forces the numpy fallback. `BACKEND` names the active implementation so tests
and benchmarks can compare both.
"""

from __future__ import annotations

import os

from . import _eig_py

if os.environ.get("SEEGRAPH_PURE", "") == "1":
    _impl = _eig_py
    BACKEND = "python"
else:
    try:
        from . import _eig as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build environment
        _impl = _eig_py
        BACKEND = "python"

jacobi_cycle = _impl.jacobi_cycle


def backends() -> dict[str, object]:
    """Every available jacobi_cycle implementation, keyed by backend name."""
    table = {"python": _eig_py.jacobi_cycle}
    try:
        from . import _eig
        table["compiled"] = _eig.jacobi_cycle
    except ImportError:
        pass
    return table
