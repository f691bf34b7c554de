"""Numeric kernel backend selection.

The compiled extension is preferred when it imported cleanly; the pure-numpy
module is the fallback and the reference semantics. Set PROBEGUIDE_FORCE_PYTHON=1
to insist on the fallback (useful for debugging and the backend benchmarks).
BVH construction always runs in numpy so both cast paths consume one tree.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

from . import pykernels
from .pykernels import Bvh, bvh_build  # noqa: F401

_PY = SimpleNamespace(
    name="python",
    lbs_blend=pykernels.lbs_blend,
    ray_cast_brute=pykernels.ray_cast_brute,
    ray_cast_bvh=pykernels.ray_cast_bvh,
    bvh_build=pykernels.bvh_build,
)

_CY = None
try:
    from . import _fastcore
except ImportError:
    _fastcore = None
else:
    _CY = SimpleNamespace(
        name="cython",
        lbs_blend=_fastcore.lbs_blend,
        ray_cast_brute=_fastcore.ray_cast_brute,
        ray_cast_bvh=_fastcore.ray_cast_bvh,
        bvh_build=pykernels.bvh_build,
    )

if os.environ.get("PROBEGUIDE_FORCE_PYTHON", "0") not in ("", "0"):
    _active = _PY
else:
    _active = _CY if _CY is not None else _PY


def backend_name() -> str:
    return _active.name


def get_backend(name: str) -> SimpleNamespace:
    """Fetch a backend by name ("python" or "cython") for tests and benchmarks."""
    if name == "python":
        return _PY
    if name == "cython":
        if _CY is None:
            raise RuntimeError("compiled kernel extension is not available")
        return _CY
    raise ValueError(f"unknown backend {name!r}")


lbs_blend = _active.lbs_blend
ray_cast_brute = _active.ray_cast_brute
ray_cast_bvh = _active.ray_cast_bvh
