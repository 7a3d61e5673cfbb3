"""Selection of the permutation-kernel backend.

A compiled Cython kernel (``permcca._stepwise``) is preferred when it was
built; otherwise the batched NumPy implementation is used.  The environment
variable ``PERMCCA_BACKEND`` forces the choice (``"compiled"`` or
``"python"``), which the benchmark and the parity tests rely on.
"""

from __future__ import annotations

import os

from . import _stepwise_py

try:
    from . import _stepwise as _compiled
except ImportError:  # extension not built
    _compiled = None

_FORCED = os.environ.get("PERMCCA_BACKEND", "").strip().lower()
if _FORCED == "python":
    _active = _stepwise_py
elif _FORCED == "compiled":
    if _compiled is None:
        raise ImportError(
            "PERMCCA_BACKEND=compiled but the permcca._stepwise extension is not built"
        )
    _active = _compiled
elif _FORCED:
    raise ImportError(f"unknown PERMCCA_BACKEND value {_FORCED!r}")
else:
    _active = _compiled if _compiled is not None else _stepwise_py


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def compiled_available():
    return _compiled is not None


def get_backend(name=None):
    """Kernel module by name; default is the active one."""
    if name in (None, ""):
        return _active
    if name == "python":
        return _stepwise_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled backend is not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def stats_for_perms(u, v, cross, perm_y, perm_x, n_components, use_roy, stepwise):
    return _active.stats_for_perms(
        u, v, cross, perm_y, perm_x, n_components, use_roy, stepwise
    )
