"""Kernel backend dispatch.

Two interchangeable backends implement the hot kernels:

- ``compiled``: Cython extension (``_fast``), built by setup.py
- ``python``: pure-numpy reference (``_ref``)

Outputs are bit-identical; the compiled backend is only faster. Selection
order: the SCENESTREAM_KERNELS environment variable ("compiled" or
"python"), else the compiled backend when importable, else the reference.
"""

from __future__ import annotations

import os

from . import _ref

_VALID = {"auto", "compiled", "python"}


def get_backend(name: str):
    """Return the backend module for an explicit name ("compiled"/"python")."""
    if name == "python":
        return _ref
    if name == "compiled":
        from . import _fast
        return _fast
    raise ValueError(f"unknown kernel backend {name!r}; choose from compiled, python")


def available_backends() -> tuple[str, ...]:
    names = ["python"]
    try:
        get_backend("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return tuple(names)


_choice = os.environ.get("SCENESTREAM_KERNELS", "auto").strip().lower() or "auto"
if _choice not in _VALID:
    raise ValueError(
        f"SCENESTREAM_KERNELS={_choice!r} not understood; choose from {sorted(_VALID)}"
    )
if _choice == "auto":
    try:
        _impl = get_backend("compiled")
    except ImportError:
        _impl = _ref
else:
    _impl = get_backend(_choice)

BACKEND = _impl.BACKEND_NAME
box_pair_intersection_volume = _impl.box_pair_intersection_volume
render_boxes = _impl.render_boxes

__all__ = [
    "BACKEND",
    "available_backends",
    "box_pair_intersection_volume",
    "get_backend",
    "render_boxes",
]
