"""Backend selection for the finite-volume step kernels.

The compiled Cython kernels are used when importable; otherwise the
pure-NumPy twins take over. Set FLUXLAB_PURE_PY=1 to force the fallback
(e.g. for benchmarking, see benchmarks/bench_kernels.py).
"""

import os

from . import _kernels_py

if os.environ.get("FLUXLAB_PURE_PY", "") in ("1", "true", "yes"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

max_wave_speed = _impl.max_wave_speed
spatial_rhs = _impl.spatial_rhs
rk2_step = _impl.rk2_step


def backends():
    """(name, module) pairs for every available backend, compiled first."""
    out = []
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out.append(("cython", _kernels))
    except ImportError:
        pass
    out.append(("python", _kernels_py))
    return out
